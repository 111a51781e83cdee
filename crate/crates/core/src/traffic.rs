//! Synthetic traffic generators and dependency-tracked trace replay.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::topology::{MeshTopology, NodeId};

pub const DEFAULT_PACKET_SIZE: u32 = 6;

/// 32-bit words consumed per (node, cycle): two `u64` draws, always.
const WORDS_PER_CYCLE: u128 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrafficPattern {
    UniformRandom,
    Transpose,
    Trace(PathBuf),
}

impl fmt::Display for TrafficPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficPattern::UniformRandom => f.write_str("uniform"),
            TrafficPattern::Transpose => f.write_str("transpose"),
            TrafficPattern::Trace(_) => f.write_str("trace"),
        }
    }
}

impl FromStr for TrafficPattern {
    type Err = Error;

    /// Accepts `uniform`, `transpose`, or `trace:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "ur" | "uniform-random" => Ok(TrafficPattern::UniformRandom),
            "transpose" => Ok(TrafficPattern::Transpose),
            _ => match s.strip_prefix("trace:") {
                Some(p) if !p.is_empty() => Ok(TrafficPattern::Trace(PathBuf::from(p))),
                _ => Err(Error::config(format!("unknown traffic pattern `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficConfig {
    pub pattern: TrafficPattern,
    /// Offered load in flits/node/cycle.
    pub rate: f64,
    pub packet_size_flits: u32,
    pub seed: u64,
}

impl TrafficConfig {
    pub fn new(pattern: TrafficPattern, rate: f64, seed: u64) -> Result<Self> {
        let cfg = TrafficConfig {
            pattern,
            rate,
            packet_size_flits: DEFAULT_PACKET_SIZE,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.packet_size_flits == 0 {
            return Err(Error::config("packet size must be at least one flit"));
        }
        if !matches!(self.pattern, TrafficPattern::Trace(_))
            && !(self.rate >= 0.0 && self.rate <= 1.0)
        {
            return Err(Error::config(format!(
                "injection rate {} outside [0, 1]",
                self.rate
            )));
        }
        Ok(())
    }

    /// Per-node, per-cycle packet probability.
    pub fn packet_probability(&self) -> f64 {
        self.rate / self.packet_size_flits as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratedPacket {
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u32,
    pub created: u64,
}

/// Deterministic synthetic source: the draw for (node, cycle) depends only
/// on the seed, the node and the cycle.
pub struct SyntheticSource {
    cfg: TrafficConfig,
    rngs: Vec<ChaCha8Rng>,
    p: f64,
}

impl SyntheticSource {
    pub fn new(cfg: &TrafficConfig, nodes: usize) -> Self {
        let rngs = (0..nodes)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
                r.set_stream(i as u64);
                r
            })
            .collect();
        SyntheticSource {
            p: cfg.packet_probability(),
            cfg: cfg.clone(),
            rngs,
        }
    }

    pub fn generate(&mut self, topo: &MeshTopology, node: NodeId, cycle: u64) -> Option<GeneratedPacket> {
        let rng = &mut self.rngs[node.0];
        let pos = cycle as u128 * WORDS_PER_CYCLE;
        // sequential callers never pay for a seek
        if rng.get_word_pos() != pos {
            rng.set_word_pos(pos);
        }
        let a = rng.next_u64();
        let b = rng.next_u64();
        match self.cfg.pattern {
            TrafficPattern::UniformRandom => gen_uniform(&self.cfg, self.p, topo, node, cycle, [a, b]),
            TrafficPattern::Transpose => gen_transpose(&self.cfg, self.p, topo, node, cycle, [a, b]),
            TrafficPattern::Trace(_) => None,
        }
    }
}

fn bernoulli(p: f64, word: u64) -> bool {
    // 53-bit uniform in [0,1)
    let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    u < p
}

/// Multiply-shift reduction of a 64-bit word onto `0..n`.
fn below(word: u64, n: usize) -> usize {
    ((word as u128 * n as u128) >> 64) as usize
}

/// `draws[0]` decides whether a packet is generated, `draws[1]` picks the
/// destination.
pub fn gen_uniform(
    cfg: &TrafficConfig,
    p: f64,
    topo: &MeshTopology,
    node: NodeId,
    cycle: u64,
    draws: [u64; 2],
) -> Option<GeneratedPacket> {
    let n = topo.node_count();
    if n < 2 || !bernoulli(p, draws[0]) {
        return None;
    }
    let mut d = below(draws[1], n - 1);
    if d >= node.0 {
        d += 1;
    }
    Some(GeneratedPacket {
        src: node,
        dst: NodeId(d),
        size: cfg.packet_size_flits,
        created: cycle,
    })
}

/// Transpose partner of `node`, `None` on the diagonal or when the mirrored
/// coordinate falls outside a non-square mesh.
pub fn transpose_of(topo: &MeshTopology, node: NodeId) -> Option<NodeId> {
    let (x, y) = topo.coords(node);
    if x == y {
        return None;
    }
    topo.node_at(y, x)
}

pub fn gen_transpose(
    cfg: &TrafficConfig,
    p: f64,
    topo: &MeshTopology,
    node: NodeId,
    cycle: u64,
    draws: [u64; 2],
) -> Option<GeneratedPacket> {
    let dst = transpose_of(topo, node)?;
    if !bernoulli(p, draws[0]) {
        return None;
    }
    Some(GeneratedPacket {
        src: node,
        dst,
        size: cfg.packet_size_flits,
        created: cycle,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_flits: u32,
    pub earliest_cycle: u64,
    pub deps: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Record index by packet id.
    pub index: HashMap<u64, usize>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_trace(path: &Path, topo: &MeshTopology) -> Result<Trace> {
    parse_trace(&std::fs::read_to_string(path)?, topo)
}

pub fn parse_trace(text: &str, topo: &MeshTopology) -> Result<Trace> {
    let err = |line: usize, msg: String| Error::Trace { line, msg };
    let mut records = Vec::new();
    let mut index = HashMap::new();
    let mut lines = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(err(lineno, format!("expected at least 5 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| err(lineno, format!("invalid {what} `{s}`")))
        };
        let id = num(fields[0], "packet id")?;
        let src = num(fields[1], "source")? as usize;
        let dst = num(fields[2], "destination")? as usize;
        let size = num(fields[3], "size")?;
        let earliest = num(fields[4], "earliest cycle")?;
        for (v, what) in [(src, "source"), (dst, "destination")] {
            if v >= topo.node_count() {
                return Err(err(lineno, format!("{what} {v} outside the mesh")));
            }
        }
        if size == 0 || size > u32::MAX as u64 {
            return Err(err(lineno, format!("invalid size {size}")));
        }
        let deps = fields[5..]
            .iter()
            .map(|s| num(s, "dependency id"))
            .collect::<Result<Vec<_>>>()?;
        if index.insert(id, records.len()).is_some() {
            return Err(err(lineno, format!("duplicate packet id {id}")));
        }
        lines.insert(id, lineno);
        records.push(TraceRecord {
            id,
            src: NodeId(src),
            dst: NodeId(dst),
            size_flits: size as u32,
            earliest_cycle: earliest,
            deps,
        });
    }
    for r in &records {
        for d in &r.deps {
            if !index.contains_key(d) {
                return Err(err(lines[&r.id], format!("unknown dependency {d}")));
            }
        }
    }
    // Kahn's algorithm; anything left over sits on a cycle.
    let mut indeg: Vec<usize> = records.iter().map(|r| r.deps.len()).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
    for (i, r) in records.iter().enumerate() {
        for d in &r.deps {
            users[index[d]].push(i);
        }
    }
    let mut queue: VecDeque<usize> = (0..records.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop_front() {
        seen += 1;
        for &u in &users[i] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                queue.push_back(u);
            }
        }
    }
    if seen != records.len() {
        let culprit = (0..records.len()).find(|&i| indeg[i] > 0).unwrap();
        return Err(err(
            lines[&records[culprit].id],
            format!("dependency cycle through packet {}", records[culprit].id),
        ));
    }
    Ok(Trace { records, index })
}

/// Releases trace packets once their dependencies have completed and their
/// earliest cycle has arrived.
pub struct TraceReplayer {
    trace: Trace,
    waiting_on: Vec<usize>,
    users: Vec<Vec<usize>>,
    /// Dependency-free records keyed by (earliest cycle, record index).
    ready: BTreeMap<(u64, usize), ()>,
    completed: usize,
    released: usize,
}

impl TraceReplayer {
    pub fn new(trace: Trace) -> Self {
        let n = trace.records.len();
        let mut users = vec![Vec::new(); n];
        let mut waiting_on = vec![0; n];
        let mut ready = BTreeMap::new();
        for (i, r) in trace.records.iter().enumerate() {
            waiting_on[i] = r.deps.len();
            for d in &r.deps {
                users[trace.index[d]].push(i);
            }
            if r.deps.is_empty() {
                ready.insert((r.earliest_cycle, i), ());
            }
        }
        TraceReplayer {
            trace,
            waiting_on,
            users,
            ready,
            completed: 0,
            released: 0,
        }
    }

    /// Records eligible at `cycle`, in (earliest, file order).
    pub fn poll(&mut self, cycle: u64) -> Vec<TraceRecord> {
        let mut out = Vec::new();
        while let Some((&(earliest, i), _)) = self.ready.first_key_value() {
            if earliest > cycle {
                break;
            }
            self.ready.pop_first();
            self.released += 1;
            out.push(self.trace.records[i].clone());
        }
        out
    }

    /// Marks a packet finished (ejected, delivered locally, or discarded).
    pub fn complete(&mut self, id: u64) {
        let Some(&i) = self.trace.index.get(&id) else {
            return;
        };
        self.completed += 1;
        for k in 0..self.users[i].len() {
            let u = self.users[i][k];
            self.waiting_on[u] -= 1;
            if self.waiting_on[u] == 0 {
                let e = self.trace.records[u].earliest_cycle;
                self.ready.insert((e, u), ());
            }
        }
    }

    pub fn is_finished(&self) -> bool {
        self.completed == self.trace.records.len()
    }

    pub fn released(&self) -> usize {
        self.released
    }

    pub fn completed(&self) -> usize {
        self.completed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh8() -> MeshTopology {
        MeshTopology::build_mesh(8, 8).unwrap()
    }

    #[test]
    fn bernoulli_rate_matches() {
        let t = mesh8();
        let cfg = TrafficConfig::new(TrafficPattern::UniformRandom, 0.6, 7).unwrap();
        let mut src = SyntheticSource::new(&cfg, t.node_count());
        let cycles = 1_000_000u64;
        let hits = (0..cycles)
            .filter(|&c| src.generate(&t, NodeId(3), c).is_some())
            .count() as f64;
        let rate = hits / cycles as f64;
        assert!((rate - 0.1).abs() < 0.003, "{rate}");
    }

    #[test]
    fn uniform_destinations_chi_square() {
        let t = mesh8();
        let cfg = TrafficConfig::new(TrafficPattern::UniformRandom, 1.0, 11).unwrap();
        let mut src = SyntheticSource::new(&cfg, 64);
        let mut hist = [0u64; 64];
        let mut total = 0u64;
        for c in 0..300_000 {
            if let Some(p) = src.generate(&t, NodeId(20), c) {
                assert_ne!(p.dst, NodeId(20));
                hist[p.dst.0] += 1;
                total += 1;
            }
        }
        assert_eq!(hist[20], 0);
        let expect = total as f64 / 63.0;
        let chi2: f64 = hist
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 20)
            .map(|(_, &h)| (h as f64 - expect).powi(2) / expect)
            .sum();
        // 62 degrees of freedom: mean 62, sigma ~11.1
        assert!(chi2 < 62.0 + 3.0 * 11.14, "{chi2}");
    }

    #[test]
    fn zero_rate_never_fires() {
        let t = mesh8();
        let cfg = TrafficConfig::new(TrafficPattern::UniformRandom, 0.0, 1).unwrap();
        let mut src = SyntheticSource::new(&cfg, 64);
        assert!((0..10_000).all(|c| src.generate(&t, NodeId(0), c).is_none()));
    }

    #[test]
    fn transpose_pairs() {
        let t = mesh8();
        let n13 = t.node_at(1, 3).unwrap();
        assert_eq!(transpose_of(&t, n13), t.node_at(3, 1));
        assert_eq!(transpose_of(&t, t.node_at(2, 2).unwrap()), None);
        for n in t.nodes() {
            if let Some(d) = transpose_of(&t, n) {
                assert_eq!(transpose_of(&t, d), Some(n));
            }
        }
    }

    #[test]
    fn generator_is_pure_in_cycle() {
        let t = mesh8();
        let cfg = TrafficConfig::new(TrafficPattern::UniformRandom, 0.5, 3).unwrap();
        let mut a = SyntheticSource::new(&cfg, 64);
        let mut b = SyntheticSource::new(&cfg, 64);
        let fwd: Vec<_> = (0..500).map(|c| a.generate(&t, NodeId(5), c)).collect();
        let back: Vec<_> = (0..500).rev().map(|c| b.generate(&t, NodeId(5), c)).collect();
        assert_eq!(fwd, back.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn rate_out_of_range_rejected() {
        assert!(TrafficConfig::new(TrafficPattern::UniformRandom, 1.5, 0).is_err());
        assert!(TrafficConfig::new(TrafficPattern::Transpose, -0.1, 0).is_err());
    }

    #[test]
    fn pattern_parse() {
        assert_eq!("transpose".parse::<TrafficPattern>().unwrap(), TrafficPattern::Transpose);
        assert_eq!(
            "trace:a.txt".parse::<TrafficPattern>().unwrap(),
            TrafficPattern::Trace("a.txt".into())
        );
        assert!("bitrev".parse::<TrafficPattern>().is_err());
    }

    #[test]
    fn trace_errors_have_line_numbers() {
        let t = mesh8();
        let cases = [
            ("0 0 1 1 0\n1 1 2 1 0 9\n", 2, "unknown dependency"),
            ("# c\n0 0 1 1\n", 2, "at least 5"),
            ("0 0 1 1 0 1\n1 1 0 1 0 0\n", 1, "cycle"),
            ("0 0 99 1 0\n", 1, "outside"),
            ("0 0 1 x 0\n", 1, "invalid size"),
        ];
        for (text, line, needle) in cases {
            match parse_trace(text, &t) {
                Err(Error::Trace { line: l, msg }) => {
                    assert_eq!(l, line, "{text}");
                    assert!(msg.contains(needle), "{msg}");
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn empty_trace() {
        let tr = parse_trace("# nothing\n\n", &mesh8()).unwrap();
        assert!(tr.is_empty());
        let mut rep = TraceReplayer::new(tr);
        assert!(rep.poll(100).is_empty());
        assert!(rep.is_finished());
    }

    #[test]
    fn chain_waits_for_dependency() {
        let tr = parse_trace("1 0 5 1 0\n2 5 0 5 3 1\n", &mesh8()).unwrap();
        let mut rep = TraceReplayer::new(tr);
        let first = rep.poll(0);
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].id, 1);
        assert!(rep.poll(10).is_empty());
        rep.complete(1);
        assert_eq!(rep.poll(10)[0].id, 2);
        rep.complete(2);
        assert!(rep.is_finished());
    }

    #[test]
    fn earliest_cycle_respected() {
        let tr = parse_trace("1 0 5 1 7\n", &mesh8()).unwrap();
        let mut rep = TraceReplayer::new(tr);
        assert!(rep.poll(6).is_empty());
        assert_eq!(rep.poll(7).len(), 1);
    }
}
