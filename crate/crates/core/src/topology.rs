//! 2D mesh graph, per-unidirectional-link health, and fault injection.
//!
//! Nodes are numbered row-major: `index = y * kx + x`, with `y` growing
//! southward. There are no wraparound links.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Upper bound on rejection-sampling draws per requested fault set.
pub const CONNECTIVITY_RETRY_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Direction {
    /// Fixed priority order, also used for tie-breaking (N > E > S > W).
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i]
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::East => Direction::West,
            Direction::South => Direction::North,
            Direction::West => Direction::East,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::North => 'N',
            Direction::East => 'E',
            Direction::South => 'S',
            Direction::West => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        match c {
            'N' => Some(Direction::North),
            'E' => Some(Direction::East),
            'S' => Some(Direction::South),
            'W' => Some(Direction::West),
            _ => None,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::East | Direction::West)
    }
}

/// A set of cardinal directions stored as a 4-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct DirSet(u8);

impl DirSet {
    pub const EMPTY: DirSet = DirSet(0);

    pub fn from_bits(bits: u8) -> DirSet {
        DirSet(bits & 0xF)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(d: Direction) -> DirSet {
        DirSet(1 << d.index())
    }

    pub fn contains(self, d: Direction) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn insert(&mut self, d: Direction) {
        self.0 |= 1 << d.index();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl fmt::Display for DirSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for d in self.iter() {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromIterator<Direction> for DirSet {
    fn from_iter<I: IntoIterator<Item = Direction>>(iter: I) -> Self {
        let mut s = DirSet::EMPTY;
        for d in iter {
            s.insert(d);
        }
        s
    }
}

/// One direction of a physical link, identified by its source router and
/// the output port it leaves through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UniLink {
    pub src: NodeId,
    pub dir: Direction,
}

impl UniLink {
    pub fn new(src: NodeId, dir: Direction) -> Self {
        UniLink { src, dir }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkHealth {
    Healthy,
    Faulty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshTopology {
    kx: usize,
    ky: usize,
    /// `faulty[node * 4 + dir]`; entries for nonexistent boundary links stay false.
    faulty: Vec<bool>,
}

impl MeshTopology {
    pub fn build_mesh(kx: usize, ky: usize) -> Result<Self> {
        if kx == 0 || ky == 0 {
            return Err(Error::config(format!(
                "mesh dimensions must be positive, got {kx}x{ky}"
            )));
        }
        Ok(MeshTopology {
            kx,
            ky,
            faulty: vec![false; kx * ky * 4],
        })
    }

    pub fn kx(&self) -> usize {
        self.kx
    }

    pub fn ky(&self) -> usize {
        self.ky
    }

    pub fn node_count(&self) -> usize {
        self.kx * self.ky
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn coords(&self, n: NodeId) -> (usize, usize) {
        (n.0 % self.kx, n.0 / self.kx)
    }

    pub fn node_at(&self, x: usize, y: usize) -> Option<NodeId> {
        (x < self.kx && y < self.ky).then(|| NodeId(y * self.kx + x))
    }

    pub fn neighbor(&self, n: NodeId, dir: Direction) -> Option<NodeId> {
        let (x, y) = self.coords(n);
        match dir {
            Direction::North => y.checked_sub(1).map(|y| NodeId(y * self.kx + x)),
            Direction::South => (y + 1 < self.ky).then(|| NodeId((y + 1) * self.kx + x)),
            Direction::West => x.checked_sub(1).map(|x| NodeId(y * self.kx + x)),
            Direction::East => (x + 1 < self.kx).then(|| NodeId(y * self.kx + x + 1)),
        }
    }

    pub fn link_exists(&self, link: UniLink) -> bool {
        link.src.0 < self.node_count() && self.neighbor(link.src, link.dir).is_some()
    }

    /// The opposite-directional link sharing the same wires.
    pub fn paired(&self, link: UniLink) -> Option<UniLink> {
        self.neighbor(link.src, link.dir)
            .map(|n| UniLink::new(n, link.dir.opposite()))
    }

    /// Destination router of a link.
    pub fn link_dst(&self, link: UniLink) -> Option<NodeId> {
        self.neighbor(link.src, link.dir)
    }

    /// Closed form `2·(kx·(ky−1) + ky·(kx−1))`.
    pub fn unidirectional_link_count(&self) -> usize {
        2 * self.bidirectional_link_count()
    }

    pub fn bidirectional_link_count(&self) -> usize {
        self.kx * (self.ky - 1) + self.ky * (self.kx - 1)
    }

    /// Every existing unidirectional link, in (node, direction) order.
    pub fn links(&self) -> impl Iterator<Item = UniLink> + '_ {
        self.nodes().flat_map(move |n| {
            Direction::ALL
                .into_iter()
                .map(move |d| UniLink::new(n, d))
                .filter(move |l| self.neighbor(l.src, l.dir).is_some())
        })
    }

    /// One canonical representative (East or South) per bidirectional link.
    pub fn bidirectional_links(&self) -> impl Iterator<Item = UniLink> + '_ {
        self.links()
            .filter(|l| matches!(l.dir, Direction::East | Direction::South))
    }

    pub fn health(&self, link: UniLink) -> LinkHealth {
        if self.faulty[link.src.0 * 4 + link.dir.index()] {
            LinkHealth::Faulty
        } else {
            LinkHealth::Healthy
        }
    }

    /// True if the link exists and is healthy.
    pub fn is_healthy(&self, link: UniLink) -> bool {
        self.link_exists(link) && !self.faulty[link.src.0 * 4 + link.dir.index()]
    }

    /// True if the link exists and is marked faulty.
    pub fn is_faulty(&self, link: UniLink) -> bool {
        self.link_exists(link) && self.faulty[link.src.0 * 4 + link.dir.index()]
    }

    pub fn port_healthy(&self, n: NodeId, dir: Direction) -> bool {
        self.is_healthy(UniLink::new(n, dir))
    }

    /// Healthy in both directions, i.e. usable by bidirectional Up*/Down*.
    pub fn bidir_healthy(&self, n: NodeId, dir: Direction) -> bool {
        match self.paired(UniLink::new(n, dir)) {
            Some(back) => self.port_healthy(n, dir) && self.is_healthy(back),
            None => false,
        }
    }

    pub fn set_health(&mut self, link: UniLink, health: LinkHealth) {
        assert!(self.link_exists(link), "no such link {link:?}");
        self.faulty[link.src.0 * 4 + link.dir.index()] = health == LinkHealth::Faulty;
    }

    /// Marks every link of `faults` (after pair victimization) as faulty.
    pub fn apply_faults(&mut self, faults: &FaultSet) {
        for link in faults.victimized(self).faulty {
            self.set_health(link, LinkHealth::Faulty);
        }
    }

    pub fn with_faults(&self, faults: &FaultSet) -> MeshTopology {
        let mut t = self.clone();
        t.apply_faults(faults);
        t
    }

    pub fn faulty_links(&self) -> Vec<UniLink> {
        self.links().filter(|l| self.is_faulty(*l)).collect()
    }

    pub fn manhattan(&self, a: NodeId, b: NodeId) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Bounds of the centered hotspot sub-mesh: `(x0, y0, width, height)`.
    pub fn hotspot_region(&self) -> (usize, usize, usize, usize) {
        let w = self.kx / 2;
        let h = self.ky / 2;
        ((self.kx - w) / 2, (self.ky - h) / 2, w, h)
    }

    pub fn in_hotspot(&self, n: NodeId) -> bool {
        let (x0, y0, w, h) = self.hotspot_region();
        let (x, y) = self.coords(n);
        x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
    }

    /// A bidirectional link is internal to the hotspot if both ends are inside.
    pub fn link_in_hotspot(&self, link: UniLink) -> bool {
        match self.link_dst(link) {
            Some(dst) => self.in_hotspot(link.src) && self.in_hotspot(dst),
            None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum FaultPlacement {
    #[default]
    Random,
    Hotspot,
}

impl fmt::Display for FaultPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultPlacement::Random => "random",
            FaultPlacement::Hotspot => "hotspot",
        })
    }
}

impl FromStr for FaultPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(FaultPlacement::Random),
            "hotspot" => Ok(FaultPlacement::Hotspot),
            other => Err(Error::config(format!("unknown fault placement '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FaultSet {
    pub faulty: BTreeSet<UniLink>,
    pub placement: FaultPlacement,
    pub seed: u64,
}

impl FaultSet {
    pub fn new(links: impl IntoIterator<Item = UniLink>) -> Self {
        FaultSet {
            faulty: links.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Convenience for tests and fixtures: both directions of each
    /// listed node pair.
    pub fn bidirectional(topo: &MeshTopology, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut links = BTreeSet::new();
        for &(a, b) in pairs {
            let dir = Direction::ALL
                .into_iter()
                .find(|d| topo.neighbor(NodeId(a), *d) == Some(NodeId(b)))
                .ok_or_else(|| Error::config(format!("nodes {a} and {b} are not adjacent")))?;
            links.insert(UniLink::new(NodeId(a), dir));
            links.insert(UniLink::new(NodeId(b), dir.opposite()));
        }
        Ok(FaultSet::new(links))
    }

    pub fn len(&self) -> usize {
        self.faulty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faulty.is_empty()
    }

    /// Closes the set under opposite-link pairing.
    pub fn victimized(&self, topo: &MeshTopology) -> FaultSet {
        let mut out = self.clone();
        for link in &self.faulty {
            if let Some(p) = topo.paired(*link) {
                out.faulty.insert(p);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# hermes-noc fault set\n");
        s.push_str(&format!("seed {}\n", self.seed));
        s.push_str(&format!("placement {}\n", self.placement));
        for l in &self.faulty {
            s.push_str(&format!("{} {}\n", l.src.0, l.dir.letter()));
        }
        s
    }

    pub fn parse(text: &str, topo: &MeshTopology, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut set = FaultSet::default();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let arg = parts.next();
            if parts.next().is_some() {
                return Err(err(lineno, format!("trailing tokens in '{line}'")));
            }
            match (head, arg) {
                ("seed", Some(v)) => {
                    set.seed = v
                        .parse()
                        .map_err(|_| err(lineno, format!("bad seed '{v}'")))?;
                }
                ("placement", Some(v)) => {
                    set.placement = v.parse().map_err(|e: Error| err(lineno, e.to_string()))?;
                }
                (idx, Some(d)) => {
                    let src: usize = idx
                        .parse()
                        .map_err(|_| err(lineno, format!("bad node index '{idx}'")))?;
                    let mut chars = d.chars();
                    let dir = match (chars.next().and_then(Direction::from_letter), chars.next()) {
                        (Some(dir), None) => dir,
                        _ => return Err(err(lineno, format!("bad direction '{d}'"))),
                    };
                    let link = UniLink::new(NodeId(src), dir);
                    if !topo.link_exists(link) {
                        return Err(err(lineno, format!("link {src} {d} is not in the mesh")));
                    }
                    set.faulty.insert(link);
                }
                _ => return Err(err(lineno, format!("malformed line '{line}'"))),
            }
        }
        Ok(set)
    }

    pub fn load(path: &Path, topo: &MeshTopology) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, topo, path)
    }
}

/// Undirected connected components over links healthy in both directions.
/// Each node is labeled by the smallest node id in its component.
pub fn connected_components(topo: &MeshTopology) -> Vec<NodeId> {
    let n = topo.node_count();
    let mut label: Vec<Option<NodeId>> = vec![None; n];
    let mut queue = VecDeque::new();
    for start in topo.nodes() {
        if label[start.0].is_some() {
            continue;
        }
        label[start.0] = Some(start);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for d in Direction::ALL {
                if !topo.bidir_healthy(u, d) {
                    continue;
                }
                let v = topo.neighbor(u, d).expect("healthy link has a neighbor");
                if label[v.0].is_none() {
                    label[v.0] = Some(start);
                    queue.push_back(v);
                }
            }
        }
    }
    label.into_iter().map(|l| l.expect("all nodes labeled")).collect()
}

pub fn component_count(topo: &MeshTopology) -> usize {
    let labels = connected_components(topo);
    labels
        .iter()
        .enumerate()
        .filter(|(i, l)| l.0 == *i)
        .count()
}

pub fn is_connected(topo: &MeshTopology) -> bool {
    component_count(topo) == 1
}

/// Bidirectional links that can fail while a spanning tree survives:
/// `|C| − |C'|` with `|C'| = N − 1`.
pub fn max_tolerable_faults(topo: &MeshTopology) -> usize {
    topo.bidirectional_link_count() - (topo.node_count() - 1)
}

/// Turns `pairs` sampled bidirectional links into exactly `n` unidirectional
/// picks (both directions for all but possibly the last pair).
fn expand_pairs(
    picked: &[UniLink],
    n: usize,
    topo: &MeshTopology,
    rng: &mut ChaCha8Rng,
) -> BTreeSet<UniLink> {
    let mut out = BTreeSet::new();
    for (i, link) in picked.iter().enumerate() {
        let back = topo.paired(*link).expect("sampled link exists");
        if 2 * i + 1 == n {
            out.insert(if rng.random_bool(0.5) { *link } else { back });
        } else {
            out.insert(*link);
            out.insert(back);
        }
    }
    out
}

fn healthy_bidir_candidates(topo: &MeshTopology) -> Vec<UniLink> {
    topo.bidirectional_links()
        .filter(|l| topo.bidir_healthy(l.src, l.dir))
        .collect()
}

/// Draws `n` unidirectional faults among currently healthy links. Because
/// faults victimize their pair, this means `⌈n/2⌉` distinct physical links.
pub fn inject_random_faults(
    topo: &MeshTopology,
    n: usize,
    seed: u64,
    require_connected: bool,
) -> Result<FaultSet> {
    let pairs = n.div_ceil(2);
    let candidates = healthy_bidir_candidates(topo);
    if pairs > candidates.len() {
        return Err(Error::FaultInjection {
            seed,
            reason: format!("{n} faults requested but only {} healthy links", candidates.len()),
        });
    }
    if require_connected {
        let already = topo.bidirectional_link_count() - candidates.len();
        if already + pairs > max_tolerable_faults(topo) {
            return Err(Error::FaultInjection {
                seed,
                reason: format!("{n} faults exceed the connectivity limit"),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONNECTIVITY_RETRY_CAP {
        let picked: Vec<UniLink> = sample(&mut rng, candidates.len(), pairs)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let faulty = expand_pairs(&picked, n, topo, &mut rng);
        let set = FaultSet {
            faulty,
            placement: FaultPlacement::Random,
            seed,
        };
        if !require_connected || is_connected(&topo.with_faults(&set)) {
            return Ok(set);
        }
    }
    Err(Error::FaultInjection {
        seed,
        reason: format!("no connected placement of {n} faults within {CONNECTIVITY_RETRY_CAP} draws"),
    })
}

/// Places half of the faulty links inside the centered sub-mesh and the rest
/// on links outside it.
pub fn inject_hotspot_faults(
    topo: &MeshTopology,
    n: usize,
    seed: u64,
    require_connected: bool,
) -> Result<FaultSet> {
    let pairs = n.div_ceil(2);
    let inside_pairs = pairs.div_ceil(2);
    let outside_pairs = pairs - inside_pairs;
    let (inside, outside): (Vec<UniLink>, Vec<UniLink>) = healthy_bidir_candidates(topo)
        .into_iter()
        .partition(|l| topo.link_in_hotspot(*l));
    if inside_pairs > inside.len() || outside_pairs > outside.len() {
        return Err(Error::FaultInjection {
            seed,
            reason: format!(
                "hotspot capacity exceeded: need {inside_pairs}/{outside_pairs} links, have {}/{}",
                inside.len(),
                outside.len()
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONNECTIVITY_RETRY_CAP {
        let mut picked: Vec<UniLink> = sample(&mut rng, inside.len(), inside_pairs)
            .into_iter()
            .map(|i| inside[i])
            .collect();
        picked.extend(
            sample(&mut rng, outside.len(), outside_pairs)
                .into_iter()
                .map(|i| outside[i]),
        );
        let faulty = expand_pairs(&picked, n, topo, &mut rng);
        let set = FaultSet {
            faulty,
            placement: FaultPlacement::Hotspot,
            seed,
        };
        if !require_connected || is_connected(&topo.with_faults(&set)) {
            return Ok(set);
        }
    }
    Err(Error::FaultInjection {
        seed,
        reason: format!("no connected hotspot placement of {n} faults within {CONNECTIVITY_RETRY_CAP} draws"),
    })
}

pub fn inject_faults(
    topo: &MeshTopology,
    placement: FaultPlacement,
    n: usize,
    seed: u64,
    require_connected: bool,
) -> Result<FaultSet> {
    match placement {
        FaultPlacement::Random => inject_random_faults(topo, n, seed, require_connected),
        FaultPlacement::Hotspot => inject_hotspot_faults(topo, n, seed, require_connected),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(k: usize) -> MeshTopology {
        MeshTopology::build_mesh(k, k).unwrap()
    }

    #[test]
    fn link_counts() {
        assert_eq!(mesh(8).bidirectional_link_count(), 112);
        assert_eq!(mesh(8).unidirectional_link_count(), 224);
        assert_eq!(mesh(3).bidirectional_link_count(), 12);
        assert_eq!(mesh(3).links().count(), 24);
        assert_eq!(mesh(1).links().count(), 0);
        assert!(MeshTopology::build_mesh(0, 4).is_err());
        assert!(MeshTopology::build_mesh(3, 0).is_err());
    }

    #[test]
    fn closed_form_matches_enumeration_up_to_16() {
        for kx in 1..=16 {
            for ky in 1..=16 {
                let t = MeshTopology::build_mesh(kx, ky).unwrap();
                assert_eq!(t.links().count(), 2 * (kx * (ky - 1) + ky * (kx - 1)));
                assert_eq!(t.bidirectional_links().count(), t.bidirectional_link_count());
            }
        }
    }

    #[test]
    fn coordinates_are_a_bijection() {
        let t = MeshTopology::build_mesh(5, 3).unwrap();
        for n in t.nodes() {
            let (x, y) = t.coords(n);
            assert_eq!(t.node_at(x, y), Some(n));
        }
        assert_eq!(t.node_at(5, 0), None);
    }

    #[test]
    fn pairing_is_an_involution() {
        let t = mesh(4);
        for l in t.links() {
            let p = t.paired(l).unwrap();
            assert_ne!(p, l);
            assert_eq!(t.paired(p), Some(l));
        }
    }

    #[test]
    fn victimization_examples() {
        let t = mesh(3);
        let east = UniLink::new(NodeId(1), Direction::East);
        let west = UniLink::new(NodeId(2), Direction::West);
        let v = FaultSet::new([east]).victimized(&t);
        assert_eq!(v.faulty, [east, west].into_iter().collect());
        assert!(FaultSet::default().victimized(&t).is_empty());
        assert_eq!(v.victimized(&t), v);
    }

    #[test]
    fn random_fault_tiers() {
        let t = mesh(8);
        for (n, pct) in [(12, 5.36), (23, 10.27), (27, 12.05)] {
            let f = inject_random_faults(&t, n, 7, true).unwrap();
            assert_eq!(f.len(), n);
            let frac = 100.0 * n as f64 / t.unidirectional_link_count() as f64;
            assert!((frac - pct).abs() < 0.005, "{n}: {frac}");
            assert_eq!(f.victimized(&t).len(), 2 * n.div_ceil(2));
        }
        assert!(inject_random_faults(&t, 0, 1, true).unwrap().is_empty());
    }

    #[test]
    fn random_faults_deterministic_per_seed() {
        let t = mesh(8);
        let a = inject_random_faults(&t, 27, 99, true).unwrap();
        let b = inject_random_faults(&t, 27, 99, true).unwrap();
        let c = inject_random_faults(&t, 27, 100, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.faulty, c.faulty);
    }

    #[test]
    fn over_limit_connected_request_rejected() {
        let t = mesh(3);
        // 4 bidirectional links is the limit; 5 pairs cannot stay connected.
        let err = inject_random_faults(&t, 10, 3, true).unwrap_err();
        assert!(matches!(err, Error::FaultInjection { seed: 3, .. }));
    }

    #[test]
    fn hotspot_split_and_density() {
        let t = mesh(8);
        let f = inject_hotspot_faults(&t, 24, 5, true).unwrap();
        let inside = f.faulty.iter().filter(|l| t.link_in_hotspot(**l)).count();
        assert_eq!(inside, 12);
        assert_eq!(f.len() - inside, 12);
        // 24 internal bidirectional links vs 88 elsewhere.
        let internal = t.bidirectional_links().filter(|l| t.link_in_hotspot(*l)).count();
        assert_eq!(internal, 24);
        let density_ratio = (12.0 / 24.0) / (12.0 / 88.0);
        assert!((3.0..=4.0).contains(&density_ratio), "{density_ratio}");
        assert!(inject_hotspot_faults(&t, 0, 5, true).unwrap().is_empty());
        assert!(inject_hotspot_faults(&t, 120, 5, false).is_err());
    }

    #[test]
    fn fig2_components() {
        let t = mesh(3);
        let f = FaultSet::bidirectional(&t, &[(1, 2), (4, 5), (7, 8)]).unwrap();
        let labels = connected_components(&t.with_faults(&f));
        let ids: Vec<usize> = labels.iter().map(|l| l.0).collect();
        assert_eq!(ids, vec![0, 0, 2, 0, 0, 2, 0, 0, 2]);
    }

    #[test]
    fn component_edge_cases() {
        let t = mesh(8);
        assert_eq!(component_count(&t), 1);
        let all = FaultSet::new(t.links());
        let labels = connected_components(&t.with_faults(&all));
        assert!(labels.iter().enumerate().all(|(i, l)| l.0 == i));
    }

    #[test]
    fn max_faults_formula() {
        assert_eq!(max_tolerable_faults(&mesh(8)), 49);
        assert_eq!(max_tolerable_faults(&mesh(3)), 4);
        assert_eq!(max_tolerable_faults(&mesh(1)), 0);
    }

    #[test]
    fn fault_file_parse_errors_carry_line_numbers() {
        let t = mesh(3);
        let p = Path::new("f.txt");
        let err = FaultSet::parse("seed 1\n0 E\n8 E\n", &t, p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = FaultSet::parse("0 Q\n", &t, p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let ok = FaultSet::parse("# c\nseed 4\nplacement hotspot\n0 E\n", &t, p).unwrap();
        assert_eq!(ok.seed, 4);
        assert_eq!(ok.placement, FaultPlacement::Hotspot);
        assert_eq!(ok.len(), 1);
    }
}
