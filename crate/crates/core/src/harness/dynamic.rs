use super::{build_network, watchdog, ExperimentConfig};
use crate::error::Result;
use crate::simcore::InjectOutcome;
use crate::topology::inject_random_faults;
use crate::traffic::{SyntheticSource, TrafficConfig};

/// Defaults for [`stabilization_cycles`].
pub const STEADY_TAIL_BINS: usize = 20;
pub const STEADY_HOLD_BINS: usize = 3;
pub const STEADY_TOLERANCE: f64 = 1.1;

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicConfig {
    /// Mesh, routing and traffic pattern; its fault settings describe the
    /// faults present from cycle 0.
    pub base: ExperimentConfig,
    pub rate: f64,
    pub seed: u64,
    /// Unidirectional faults raised together at `fault_cycle`.
    pub fault_count: usize,
    pub fault_cycle: u64,
    pub total_cycles: u64,
    pub bin: u64,
    /// Cap on extra cycles to let packets created before `total_cycles`
    /// finish.
    pub drain: u64,
}

impl DynamicConfig {
    pub fn new(base: ExperimentConfig, rate: f64, seed: u64) -> Self {
        DynamicConfig {
            base,
            rate,
            seed,
            fault_count: 25,
            fault_cycle: 20_000,
            total_cycles: 100_000,
            bin: 1_000,
            drain: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinStat {
    pub start: u64,
    pub count: u64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicResult {
    /// Latency of packets grouped by the bin of their creation cycle.
    pub bins: Vec<BinStat>,
    pub fault_cycle: u64,
    /// End of the reconfiguration epoch as scheduled by the network.
    pub scheduled_resume: u64,
    /// First cycle at which a flit entered the network after the fault.
    pub observed_resume: Option<u64>,
    /// Flits moved by the data plane while frozen.
    pub frozen_flit_moves: u64,
    pub dropped: u64,
    pub rejected: u64,
}

impl DynamicResult {
    /// Median latency over bins wholly before the fault, skipping the first
    /// `skip` warm-up bins.
    pub fn baseline_median(&self, skip: usize) -> f64 {
        let pre: Vec<f64> = self
            .bins
            .iter()
            .skip(skip)
            .filter(|b| b.start + (self.bins[1].start - self.bins[0].start) <= self.fault_cycle)
            .filter(|b| b.count > 0)
            .map(|b| b.median)
            .collect();
        super::median(&pre)
    }

    /// Index of the first bin whose median latency exceeds `factor` times the
    /// pre-fault baseline.
    pub fn spike_bin(&self, factor: f64) -> Option<usize> {
        let base = self.baseline_median(5);
        self.bins
            .iter()
            .position(|b| b.count > 0 && b.median > factor * base)
    }

    pub fn bin_of(&self, cycle: u64) -> usize {
        let w = self.bins[1].start - self.bins[0].start;
        (cycle / w) as usize
    }
}

/// Cycles from resumption until the binned mean latency is back to steady
/// state: the first bin starting a run of `hold` bins that all stay within
/// `tolerance` times the median of the last `tail` bins. `None` if that never
/// happens.
pub fn stabilization_cycles(
    res: &DynamicResult,
    tail: usize,
    hold: usize,
    tolerance: f64,
) -> Option<u64> {
    let resume = res.observed_resume.unwrap_or(res.scheduled_resume);
    let means: Vec<f64> = res.bins.iter().map(|b| b.mean).collect();
    if means.len() < tail || hold == 0 {
        return None;
    }
    let limit = tolerance * super::median(&means[means.len() - tail..]);
    let first = res.bin_of(resume);
    (first..means.len().saturating_sub(hold - 1))
        .find(|&i| {
            res.bins[i..i + hold]
                .iter()
                .all(|b| b.count > 0 && b.mean <= limit)
        })
        .map(|i| res.bins[i].start.max(resume) - resume)
}

/// Stable traffic, then `fault_count` random faults at `fault_cycle`; the
/// network freezes for the reconfiguration epoch and then resumes.
pub fn dynamic_fault_experiment(cfg: &DynamicConfig) -> Result<DynamicResult> {
    let mut net = build_network(&cfg.base, cfg.seed)?;
    let topo0 = net.topology().clone();
    let mut tcfg = TrafficConfig::new(cfg.base.pattern.clone(), cfg.rate, cfg.seed)?;
    tcfg.packet_size_flits = cfg.base.packet_size;
    let mut source = SyntheticSource::new(&tcfg, topo0.node_count());
    let faults = inject_random_faults(&topo0, cfg.fault_count, cfg.seed ^ 0xfa17, true)?;

    let nbins = cfg.total_cycles.div_ceil(cfg.bin) as usize;
    let mut lat: Vec<Vec<u64>> = vec![Vec::new(); nbins];
    let mut outstanding = 0u64;
    let mut scheduled_resume = cfg.fault_cycle;
    let mut observed_resume = None;
    let mut frozen_moves = 0u64;
    let mut t = 0u64;
    loop {
        if t >= cfg.total_cycles && (outstanding == 0 || t >= cfg.total_cycles + cfg.drain) {
            break;
        }
        if t == cfg.fault_cycle {
            scheduled_resume = net.freeze_and_reconfigure(&faults).end_clock();
        }
        for node in topo0.nodes() {
            if let Some(p) = source.generate(&topo0, node, t) {
                if let InjectOutcome::Queued(_) = net.inject(p.src, p.dst, p.size, t) {
                    if t < cfg.total_cycles {
                        outstanding += 1;
                    }
                }
            }
        }
        let before = net.stats();
        let frozen = net.is_frozen();
        net.step();
        let after = net.stats();
        if frozen {
            frozen_moves += after.delivered_flits - before.delivered_flits;
            frozen_moves += after.injected_flits - before.injected_flits;
        } else if t >= cfg.fault_cycle
            && observed_resume.is_none()
            && after.injected_flits > before.injected_flits
        {
            observed_resume = Some(t);
        }
        t += 1;
        for e in net.take_ejections() {
            if e.created < cfg.total_cycles {
                outstanding -= 1;
                lat[(e.created / cfg.bin) as usize].push(e.latency());
            }
        }
        for (_, created) in net.take_dropped() {
            if created < cfg.total_cycles {
                outstanding -= 1;
            }
        }
        watchdog(&net)?;
    }
    let bins = lat
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            v.sort_unstable();
            let count = v.len() as u64;
            let mean = if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<u64>() as f64 / v.len() as f64
            };
            let median = if v.is_empty() {
                0.0
            } else if v.len() % 2 == 1 {
                v[v.len() / 2] as f64
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) as f64
            };
            BinStat {
                start: i as u64 * cfg.bin,
                count,
                mean,
                median,
            }
        })
        .collect();
    let stats = net.stats();
    Ok(DynamicResult {
        bins,
        fault_cycle: cfg.fault_cycle,
        scheduled_resume,
        observed_resume,
        frozen_flit_moves: frozen_moves,
        dropped: stats.dropped_packets,
        rejected: stats.rejected_unreachable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(means: &[f64]) -> DynamicResult {
        DynamicResult {
            bins: means
                .iter()
                .enumerate()
                .map(|(i, &m)| BinStat {
                    start: i as u64 * 100,
                    count: 10,
                    mean: m,
                    median: m,
                })
                .collect(),
            fault_cycle: 300,
            scheduled_resume: 350,
            observed_resume: Some(350),
            frozen_flit_moves: 0,
            dropped: 0,
            rejected: 0,
        }
    }

    #[test]
    fn settles_at_first_sustained_return() {
        let r = result(&[10.0, 10.0, 10.0, 90.0, 80.0, 40.0, 10.5, 30.0, 10.0, 10.0, 11.0, 10.0, 10.0]);
        // bin 6 returns but bin 7 breaks the run; bins 8..11 hold
        assert_eq!(stabilization_cycles(&r, 4, 3, 1.1), Some(800 - 350));
        assert_eq!(stabilization_cycles(&r, 4, 1, 1.1), Some(600 - 350));
        assert_eq!(stabilization_cycles(&r, 40, 3, 1.1), None);
    }

    #[test]
    fn spike_onset_uses_bin_medians() {
        let mut r = result(&[10.0; 12]);
        r.fault_cycle = 800;
        r.bins[7].mean = 50.0;
        r.bins[8].median = 500.0;
        assert_eq!(r.baseline_median(2), 10.0);
        assert_eq!(r.spike_bin(2.0), Some(8));
    }
}
