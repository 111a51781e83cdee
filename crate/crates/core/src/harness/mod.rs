//! Experiment drivers: single load points, zero-load and saturation search,
//! the dynamic-fault time series, and CSV sweeps.

mod config;
mod dynamic;
mod sweep;

pub use config::{parse_config, ExperimentConfig};
pub use dynamic::{
    dynamic_fault_experiment, stabilization_cycles, BinStat, DynamicConfig, DynamicResult,
    STEADY_HOLD_BINS, STEADY_TAIL_BINS, STEADY_TOLERANCE,
};
pub use sweep::{format_csv, sweep_and_emit, CsvRow, CSV_HEADER};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::simcore::{InjectOutcome, Network, NetworkConfig};
use crate::topology::{inject_faults, FaultSet, MeshTopology, NodeId};
use crate::traffic::{load_trace, SyntheticSource, TraceReplayer, TrafficConfig, TrafficPattern};
use crate::routing::RoutingConfig;

pub const ZERO_LOAD_RATE: f64 = 0.01;
pub const SATURATION_FACTOR: f64 = 3.0;
pub const BISECTION_STEPS: usize = 8;
const WATCHDOG_PERIOD: u64 = 1_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub rate: f64,
    pub seed: u64,
    /// Mean created→tail-ejected latency of packets created in the
    /// measurement window; 0 when none were created.
    pub avg_latency: f64,
    /// Ejected flits per node per cycle during the measurement window.
    pub throughput: f64,
    pub drops: u64,
    pub packets: u64,
    /// Measured packets still in flight when the drain budget ran out; their
    /// latency is counted up to that point.
    pub unfinished: u64,
    pub peak_source_queue: usize,
}

/// Fault set for `seed` under `cfg`: the file if given, otherwise a random
/// draw of `fault_count` unidirectional faults.
pub fn faults_for(cfg: &ExperimentConfig, topo: &MeshTopology, seed: u64) -> Result<FaultSet> {
    if let Some(path) = &cfg.faults_file {
        return FaultSet::load(path, topo);
    }
    if cfg.fault_count == 0 {
        return Ok(FaultSet::default());
    }
    inject_faults(topo, cfg.placement, cfg.fault_count, seed, cfg.require_connected)
}

pub fn build_network(cfg: &ExperimentConfig, seed: u64) -> Result<Network> {
    build_network_inner(cfg, seed, false)
}

fn build_network_inner(cfg: &ExperimentConfig, seed: u64, record_events: bool) -> Result<Network> {
    let topo = MeshTopology::build_mesh(cfg.kx, cfg.ky)?;
    let faults = faults_for(cfg, &topo, seed)?;
    let mut ncfg = NetworkConfig::new(cfg.kx, cfg.ky, RoutingConfig::new(cfg.variant, cfg.vcs)?);
    ncfg.seed = seed;
    ncfg.watchdog_horizon = cfg.watchdog_horizon;
    ncfg.record_events = record_events;
    Network::new(ncfg, &faults)
}

pub const EVENT_TRACE_HEADER: &str = "cycle,router,event,packet_id,vc";
pub const STATE_HASH_PERIOD: u64 = 10_000;

/// Runs `cycles` cycles of synthetic traffic and writes every network event
/// as CSV, with a `#hash,<cycle>,<digest>` line every [`STATE_HASH_PERIOD`]
/// cycles.
pub fn write_event_trace<W: std::io::Write>(
    cfg: &ExperimentConfig,
    rate: f64,
    seed: u64,
    cycles: u64,
    out: &mut W,
) -> Result<()> {
    let mut tcfg = TrafficConfig::new(cfg.pattern.clone(), rate, seed)?;
    tcfg.packet_size_flits = cfg.packet_size;
    let mut net = build_network_inner(cfg, seed, true)?;
    let topo = net.topology().clone();
    let mut source = SyntheticSource::new(&tcfg, topo.node_count());
    writeln!(out, "{EVENT_TRACE_HEADER}")?;
    for t in 0..cycles {
        if t % STATE_HASH_PERIOD == 0 {
            writeln!(out, "#hash,{t},{:016x}", net.state_hash())?;
        }
        for node in topo.nodes() {
            if let Some(p) = source.generate(&topo, node, t) {
                net.inject(p.src, p.dst, p.size, t);
            }
        }
        net.step();
        for e in net.take_events() {
            writeln!(out, "{},{},{},{},{}", e.cycle, e.router, e.kind, e.pid, e.vc)?;
        }
        net.take_ejections();
        net.take_dropped();
        watchdog(&net)?;
    }
    Ok(())
}

fn watchdog(net: &Network) -> Result<()> {
    if net.clock() % WATCHDOG_PERIOD == 0 {
        net.watchdog_check().map_err(Error::Deadlock)?;
    }
    Ok(())
}

/// Latency bookkeeping for packets with ids in `[lo, hi)`.
#[derive(Default)]
struct Window {
    lo: u64,
    hi: u64,
    done: u64,
    dropped: u64,
    sum_latency: u128,
    sum_created_all: u128,
    sum_created_done: u128,
    sum_created_dropped: u128,
}

impl Window {
    fn outstanding(&self) -> u64 {
        (self.hi - self.lo) - self.done - self.dropped
    }

    /// Mean latency if everything outstanding finished at `now`.
    fn lower_bound(&self, now: u64) -> f64 {
        let n = self.done + self.outstanding();
        if n == 0 {
            return 0.0;
        }
        let waiting = self.outstanding() as u128 * now as u128
            - (self.sum_created_all - self.sum_created_done - self.sum_created_dropped);
        (self.sum_latency + waiting) as f64 / n as f64
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Stop draining once the mean latency provably exceeds this value.
    pub stop_above: Option<f64>,
}

pub fn run_point(cfg: &ExperimentConfig, rate: f64, seed: u64) -> Result<MetricsRecord> {
    run_point_with(cfg, rate, seed, RunOptions::default())
}

pub fn run_point_with(
    cfg: &ExperimentConfig,
    rate: f64,
    seed: u64,
    opts: RunOptions,
) -> Result<MetricsRecord> {
    if matches!(cfg.pattern, TrafficPattern::Trace(_)) {
        return Err(Error::config("trace traffic is replayed with run_trace"));
    }
    let mut tcfg = TrafficConfig::new(cfg.pattern.clone(), rate, seed)?;
    tcfg.packet_size_flits = cfg.packet_size;
    let mut net = build_network(cfg, seed)?;
    let topo = net.topology().clone();
    let mut source = SyntheticSource::new(&tcfg, topo.node_count());
    let end = cfg.warmup + cfg.measure;
    let mut w = Window::default();
    let mut created_at = std::collections::HashMap::new();
    let mut flits_at_warmup = 0;
    let mut flits_at_end = 0;
    let mut peak_queue = 0;
    let mut t = 0u64;
    loop {
        if t == cfg.warmup {
            w.lo = net.next_packet_id();
            flits_at_warmup = net.stats().delivered_flits;
        }
        if t == end {
            w.hi = net.next_packet_id();
            flits_at_end = net.stats().delivered_flits;
        }
        if t >= end {
            let drained = w.outstanding() == 0;
            let over = opts.stop_above.is_some_and(|lim| w.lower_bound(t) > lim);
            if drained || over || t >= end + cfg.drain {
                break;
            }
        }
        for node in topo.nodes() {
            if let Some(p) = source.generate(&topo, node, t) {
                if let InjectOutcome::Queued(pid) = net.inject(p.src, p.dst, p.size, t) {
                    if t >= cfg.warmup && t < end {
                        w.sum_created_all += t as u128;
                        created_at.insert(pid, t);
                    }
                }
            }
        }
        net.step();
        t += 1;
        for e in net.take_ejections() {
            if e.created >= cfg.warmup && e.created < end {
                w.done += 1;
                w.sum_latency += e.latency() as u128;
                w.sum_created_done += e.created as u128;
                created_at.remove(&e.pid);
            }
        }
        for (pid, created) in net.take_dropped() {
            if created_at.remove(&pid).is_some() {
                w.dropped += 1;
                w.sum_created_dropped += created as u128;
            }
        }
        if t % WATCHDOG_PERIOD == 0 {
            peak_queue = peak_queue.max(net.max_source_queue());
        }
        watchdog(&net)?;
    }
    let n = topo.node_count() as f64;
    let measured = (w.hi - w.lo) - w.dropped;
    let unfinished = w.outstanding();
    let avg_latency = if measured == 0 { 0.0 } else { w.lower_bound(t) };
    let stats = net.stats();
    Ok(MetricsRecord {
        rate,
        seed,
        avg_latency,
        throughput: if cfg.measure == 0 {
            0.0
        } else {
            (flits_at_end - flits_at_warmup) as f64 / (n * cfg.measure as f64)
        },
        drops: stats.dropped_packets + stats.rejected_unreachable,
        packets: measured,
        unfinished,
        peak_source_queue: peak_queue,
    })
}

/// Mean `run_point` latency at the zero-load rate over `cfg.seeds`.
pub fn zero_load_latency(cfg: &ExperimentConfig) -> Result<f64> {
    let lats = cfg
        .seeds
        .par_iter()
        .map(|&s| run_point(cfg, ZERO_LOAD_RATE, s).map(|m| m.avg_latency))
        .collect::<Result<Vec<_>>>()?;
    Ok(lats.iter().sum::<f64>() / lats.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaturationResult {
    pub seed: u64,
    pub zero_load: f64,
    pub saturation: f64,
    /// `(rate, latency)` for every bisection probe.
    pub probes: Vec<(f64, f64)>,
}

/// Bisection over `[0, 1]` for the rate at which mean latency reaches three
/// times this seed's zero-load latency.
pub fn saturation_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SaturationResult> {
    let zero_load = run_point(cfg, ZERO_LOAD_RATE, seed)?.avg_latency;
    let limit = SATURATION_FACTOR * zero_load;
    let opts = RunOptions {
        stop_above: Some(limit),
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut probes = Vec::with_capacity(BISECTION_STEPS);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let lat = run_point_with(cfg, mid, seed, opts)?.avg_latency;
        probes.push((mid, lat));
        if lat > limit {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // never crossed: report the ceiling
    let saturation = if hi == 1.0 { 1.0 } else { lo };
    Ok(SaturationResult {
        seed,
        zero_load,
        saturation,
        probes,
    })
}

pub fn saturation_per_seed(cfg: &ExperimentConfig) -> Result<Vec<SaturationResult>> {
    cfg.seeds
        .par_iter()
        .map(|&s| saturation_for_seed(cfg, s))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median over seeds of the per-seed saturation rate.
pub fn saturation_throughput(cfg: &ExperimentConfig) -> Result<f64> {
    let per_seed = saturation_per_seed(cfg)?;
    Ok(median(&per_seed.iter().map(|r| r.saturation).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRunResult {
    pub delivered: u64,
    pub discarded: u64,
    pub avg_latency: f64,
    pub finish_cycle: u64,
    /// Ejection cycle per trace id, for packets that reached their target.
    pub ejected: Vec<(u64, u64)>,
}

/// Replays a dependency trace until every record completes or `max_cycles`
/// elapse.
pub fn run_trace(cfg: &ExperimentConfig, seed: u64, max_cycles: u64) -> Result<TraceRunResult> {
    let TrafficPattern::Trace(path) = &cfg.pattern else {
        return Err(Error::config("run_trace needs a trace pattern"));
    };
    let mut net = build_network(cfg, seed)?;
    let trace = load_trace(path, net.topology())?;
    let mut rep = TraceReplayer::new(trace);
    let mut by_pid = std::collections::HashMap::new();
    let mut res = TraceRunResult {
        delivered: 0,
        discarded: 0,
        avg_latency: 0.0,
        finish_cycle: 0,
        ejected: Vec::new(),
    };
    let mut sum = 0u64;
    while !rep.is_finished() && net.clock() < max_cycles {
        let t = net.clock();
        for r in rep.poll(t) {
            match net.inject(r.src, r.dst, r.size_flits, t) {
                InjectOutcome::Queued(pid) => {
                    by_pid.insert(pid, r.id);
                }
                InjectOutcome::DeliveredLocally => {
                    res.delivered += 1;
                    res.ejected.push((r.id, t));
                    rep.complete(r.id);
                }
                InjectOutcome::RejectedUnreachable => {
                    res.discarded += 1;
                    rep.complete(r.id);
                }
            }
        }
        net.step();
        for e in net.take_ejections() {
            let id = by_pid.remove(&e.pid).expect("ejected packet came from the trace");
            res.delivered += 1;
            sum += e.latency();
            res.ejected.push((id, e.ejected));
            rep.complete(id);
        }
        for (pid, _) in net.take_dropped() {
            if let Some(id) = by_pid.remove(&pid) {
                res.discarded += 1;
                rep.complete(id);
            }
        }
        watchdog(&net)?;
    }
    res.finish_cycle = net.clock();
    if res.delivered > 0 {
        res.avg_latency = sum as f64 / res.delivered as f64;
    }
    Ok(res)
}

/// Average hop count of the given traffic pattern on a fault-free mesh.
pub fn mean_min_hops(topo: &MeshTopology, pattern: &TrafficPattern) -> f64 {
    let mut sum = 0usize;
    let mut pairs = 0usize;
    for s in topo.nodes() {
        let dsts: Vec<NodeId> = match pattern {
            TrafficPattern::Transpose => crate::traffic::transpose_of(topo, s).into_iter().collect(),
            _ => topo.nodes().filter(|&d| d != s).collect(),
        };
        for d in dsts {
            sum += topo.manhattan(s, d);
            pairs += 1;
        }
    }
    sum as f64 / pairs.max(1) as f64
}
