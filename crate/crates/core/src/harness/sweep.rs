use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{run_point, ExperimentConfig, MetricsRecord};
use crate::error::Result;

pub const CSV_HEADER: &str =
    "variant,vcs,fault_count,placement,pattern,rate,seed,avg_latency,throughput,drops";

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub rate: f64,
    /// `None` for the per-rate mean row.
    pub seed: Option<u64>,
    pub avg_latency: f64,
    pub throughput: f64,
    pub drops: f64,
}

/// Runs every (rate, seed) point and writes the CSV. Rows are sorted by rate
/// then seed, each rate followed by its mean row.
pub fn sweep_and_emit(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CsvRow>> {
    cfg.validate()?;
    let mut points: Vec<(f64, u64)> = cfg
        .rates
        .iter()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    points.dedup();
    let records: Vec<MetricsRecord> = points
        .par_iter()
        .map(|&(r, s)| run_point(cfg, r, s))
        .collect::<Result<_>>()?;
    let rows = aggregate(&records);
    std::fs::write(out, format_csv(cfg, &rows))?;
    Ok(rows)
}

fn aggregate(records: &[MetricsRecord]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let rate = records[i].rate;
        let group: Vec<&MetricsRecord> = records[i..]
            .iter()
            .take_while(|m| m.rate == rate)
            .collect();
        i += group.len();
        let n = group.len() as f64;
        let mean = |f: fn(&MetricsRecord) -> f64| group.iter().map(|m| f(m)).sum::<f64>() / n;
        rows.extend(group.iter().map(|m| CsvRow {
            rate,
            seed: Some(m.seed),
            avg_latency: m.avg_latency,
            throughput: m.throughput,
            drops: m.drops as f64,
        }));
        rows.push(CsvRow {
            rate,
            seed: None,
            avg_latency: mean(|m| m.avg_latency),
            throughput: mean(|m| m.throughput),
            drops: mean(|m| m.drops as f64),
        });
    }
    rows
}

/// Floats use Rust's shortest round-trip formatting.
pub fn format_csv(cfg: &ExperimentConfig, rows: &[CsvRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            cfg.variant,
            cfg.vcs,
            cfg.fault_count,
            cfg.placement,
            cfg.pattern,
            r.rate,
            seed,
            r.avg_latency,
            r.throughput,
            r.drops
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rate: f64, seed: u64, lat: f64) -> MetricsRecord {
        MetricsRecord {
            rate,
            seed,
            avg_latency: lat,
            throughput: rate,
            drops: seed,
            packets: 1,
            unfinished: 0,
            peak_source_queue: 0,
        }
    }

    #[test]
    fn mean_rows_are_exact_means() {
        let rows = aggregate(&[rec(0.1, 0, 10.0), rec(0.1, 1, 13.0), rec(0.2, 0, 40.0)]);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[2].seed, None);
        assert_eq!(rows[2].avg_latency, 11.5);
        assert_eq!(rows[2].drops, 0.5);
        assert_eq!(rows[4].avg_latency, 40.0);
    }

    #[test]
    fn header_and_formatting() {
        let cfg = ExperimentConfig::default();
        let rows = aggregate(&[rec(0.1, 3, 25.25)]);
        let text = format_csv(&cfg, &rows);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("h-xy,2,0,random,uniform,0.1,3,25.25,0.1,3"));
        assert_eq!(lines.next(), Some("h-xy,2,0,random,uniform,0.1,mean,25.25,0.1,3"));
    }
}
