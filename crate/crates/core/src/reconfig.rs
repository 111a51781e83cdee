//! Distributed Up*/Down* reconfiguration over the 2-bit flag overlay.
//!
//! Every node takes one atomic broadcast window of `N` control cycles, so an
//! epoch lasts exactly `N²` cycles. During a window the root emits a
//! direction-recording flag (DRF) on each healthy port and an alert flag (AF)
//! on each faulty port. DRFs spread one hop per cycle under the Up*/Down*
//! turn rule; AFs travel one hop across faulty links and are never forwarded.
//! The first window that reaches a partition also marks its links: the end
//! receiving the flag becomes `Up`, the sending end `Down`.

use std::fmt::Write as _;

use crate::topology::{DirSet, Direction, MeshTopology, NodeId, UniLink};

pub mod oracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RouterStatus {
    Normal,
    Recovering,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlertState {
    Normal,
    Alert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum PortMark {
    #[default]
    Unmarked,
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flag {
    Drf,
    Af,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RoutingTable {
    pub entries: Vec<DirSet>,
    pub valid: bool,
}

impl RoutingTable {
    pub fn invalid(n: usize) -> Self {
        RoutingTable {
            entries: vec![DirSet::EMPTY; n],
            valid: false,
        }
    }

    pub fn entry(&self, dst: NodeId) -> DirSet {
        self.entries[dst.0]
    }

    pub fn invalidate(&mut self) {
        self.entries.iter_mut().for_each(|e| *e = DirSet::EMPTY);
        self.valid = false;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RouterCtrlState {
    pub sr: RouterStatus,
    pub ar: AlertState,
    pub port_mark: [PortMark; 4],
    /// Ports on which any flag arrived during the current window.
    pub received_ports: DirSet,
    /// Ports on which the window's first DRF(s) arrived.
    pub drf_arrival_ports: DirSet,
    pub window_first_drf_cycle: Option<usize>,
    /// Set at the end of a window in which the node was alerted while still
    /// outside recovery: it lies in a partition the root cannot reach.
    pub partition_alert: bool,
    pub table: RoutingTable,
}

impl RouterCtrlState {
    pub fn new(n: usize) -> Self {
        RouterCtrlState {
            sr: RouterStatus::Normal,
            ar: AlertState::Normal,
            port_mark: [PortMark::Unmarked; 4],
            received_ports: DirSet::EMPTY,
            drf_arrival_ports: DirSet::EMPTY,
            window_first_drf_cycle: None,
            partition_alert: false,
            table: RoutingTable::invalid(n),
        }
    }

    fn mark(&self, d: Direction) -> PortMark {
        self.port_mark[d.index()]
    }

    /// The DRF came in through an `Up` port, so it is travelling away from
    /// the marking root and may only continue downward.
    fn drf_descending(&self) -> bool {
        self.drf_arrival_ports
            .iter()
            .any(|p| self.mark(p) == PortMark::Up)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolError(pub String);

impl std::fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ProtocolError {}

/// Node IDs and cycle numbers are decoded from the global clock: the low
/// field selects the cycle inside a window, the next field the broadcasting
/// root. For `N` a power of two these are exactly the `log2(N)`-bit fields.
pub fn extract_root_schedule(global_clock: u64, n_nodes: usize) -> (NodeId, usize) {
    let n = n_nodes as u64;
    let cycle = (global_clock % n) as usize;
    let root = ((global_clock / n) % n) as usize;
    (NodeId(root), cycle)
}

/// Chooses the epoch initiator among nodes adjoining newly faulty links:
/// the one the clock-driven root schedule reaches first.
pub fn select_initiator(
    topo: &MeshTopology,
    new_faults: &[UniLink],
    global_clock: u64,
) -> NodeId {
    let n = topo.node_count();
    let (clock_root, _) = extract_root_schedule(global_clock, n);
    new_faults
        .iter()
        .flat_map(|l| [Some(l.src), topo.link_dst(*l)])
        .flatten()
        .min_by_key(|c| (c.0 + n - clock_root.0) % n)
        .unwrap_or(clock_root)
}

/// Tags one DRF traversal: the receiving end is marked `Up`, the
/// sending end `Down`.
pub fn mark_link(
    topo: &MeshTopology,
    states: &mut [RouterCtrlState],
    receiver: NodeId,
    in_port: Direction,
) -> Result<(), ProtocolError> {
    let sender = topo
        .neighbor(receiver, in_port)
        .ok_or_else(|| ProtocolError(format!("node {receiver} has no {in_port:?} neighbor")))?;
    let out_port = in_port.opposite();
    let rx = states[receiver.0].mark(in_port);
    let tx = states[sender.0].mark(out_port);
    if rx != PortMark::Unmarked || tx != PortMark::Unmarked {
        return Err(ProtocolError(format!(
            "link {sender}->{receiver} already marked ({tx:?}/{rx:?})"
        )));
    }
    states[receiver.0].port_mark[in_port.index()] = PortMark::Up;
    states[sender.0].port_mark[out_port.index()] = PortMark::Down;
    Ok(())
}

/// Records the arrival port of a root's DRF.
pub fn update_routing_table(state: &mut RouterCtrlState, root: NodeId, in_port: Direction) {
    state.table.entries[root.0].insert(in_port);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct FlagMsg {
    to: NodeId,
    in_port: Direction,
    flag: Flag,
}

/// Cycle-stepped protocol engine for one network instance.
pub struct ReconfigEngine<'a> {
    topo: &'a MeshTopology,
    states: Vec<RouterCtrlState>,
    in_flight: Vec<FlagMsg>,
    emitting: Vec<NodeId>,
    flags_sent: u64,
}

impl<'a> ReconfigEngine<'a> {
    /// Starts an epoch: every routing table is invalidated and all marks cleared.
    pub fn new(topo: &'a MeshTopology) -> Self {
        let n = topo.node_count();
        ReconfigEngine {
            topo,
            states: vec![RouterCtrlState::new(n); n],
            in_flight: Vec::new(),
            emitting: Vec::new(),
            flags_sent: 0,
        }
    }

    pub fn states(&self) -> &[RouterCtrlState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<RouterCtrlState> {
        self.states
    }

    pub fn flags_sent(&self) -> u64 {
        self.flags_sent
    }

    /// Advances the control network by one cycle of `root`'s window.
    pub fn step_broadcast_cycle(&mut self, root: NodeId, cycle_in_window: usize) {
        if cycle_in_window == 0 {
            self.begin_window(root);
        } else {
            self.deliver(root, cycle_in_window);
        }
        let emitting = std::mem::take(&mut self.emitting);
        for &node in &emitting {
            self.forward(node, node == root);
        }
        self.emitting = emitting;
        self.emitting.clear();
        if cycle_in_window + 1 == self.topo.node_count() {
            self.end_window();
        }
    }

    fn begin_window(&mut self, root: NodeId) {
        self.in_flight.clear();
        for s in &mut self.states {
            s.received_ports = DirSet::EMPTY;
            s.drf_arrival_ports = DirSet::EMPTY;
            s.window_first_drf_cycle = None;
        }
        let r = &mut self.states[root.0];
        if r.sr == RouterStatus::Normal {
            r.sr = RouterStatus::Recovering;
        }
        r.ar = AlertState::Normal;
        r.window_first_drf_cycle = Some(0);
        self.emitting.push(root);
    }

    fn deliver(&mut self, root: NodeId, cycle: usize) {
        let msgs = std::mem::take(&mut self.in_flight);
        // DRFs first: a DRF and an AF landing together leave the node recovering.
        for m in msgs.iter().filter(|m| m.flag == Flag::Drf) {
            let first = self.states[m.to.0].window_first_drf_cycle;
            self.states[m.to.0].received_ports.insert(m.in_port);
            let first_arrival = match first {
                None => {
                    self.emitting.push(m.to);
                    true
                }
                Some(c) => c == cycle,
            };
            if !first_arrival {
                continue;
            }
            let s = &mut self.states[m.to.0];
            s.window_first_drf_cycle = Some(cycle);
            s.drf_arrival_ports.insert(m.in_port);
            s.sr = RouterStatus::Recovering;
            s.ar = AlertState::Normal;
            if s.mark(m.in_port) == PortMark::Unmarked {
                mark_link(self.topo, &mut self.states, m.to, m.in_port)
                    .expect("DRF crossed an already-marked link end");
            }
            update_routing_table(&mut self.states[m.to.0], root, m.in_port);
        }
        for m in msgs.iter().filter(|m| m.flag == Flag::Af) {
            let s = &mut self.states[m.to.0];
            s.received_ports.insert(m.in_port);
            if s.sr == RouterStatus::Normal {
                s.ar = AlertState::Alert;
            }
        }
        self.in_flight = msgs;
        self.in_flight.clear();
    }

    /// Forwards DRF on healthy ports and AF on faulty ones.
    fn forward(&mut self, node: NodeId, is_root: bool) {
        let s = &self.states[node.0];
        let descending = !is_root && s.drf_descending();
        let mut out = Vec::with_capacity(4);
        for d in Direction::ALL {
            if s.received_ports.contains(d) {
                continue;
            }
            let Some(nb) = self.topo.neighbor(node, d) else {
                continue;
            };
            let link = UniLink::new(node, d);
            if self.topo.is_healthy(link) {
                if descending && s.mark(d) == PortMark::Up {
                    continue;
                }
                out.push(FlagMsg {
                    to: nb,
                    in_port: d.opposite(),
                    flag: Flag::Drf,
                });
            } else {
                out.push(FlagMsg {
                    to: nb,
                    in_port: d.opposite(),
                    flag: Flag::Af,
                });
            }
        }
        self.flags_sent += out.len() as u64;
        self.in_flight.extend(out);
    }

    fn end_window(&mut self) {
        for s in &mut self.states {
            if s.ar == AlertState::Alert && s.sr == RouterStatus::Normal {
                s.partition_alert = true;
            }
        }
    }

    /// Closes the epoch: all routers return to normal with valid tables.
    pub fn finish(mut self) -> Vec<RouterCtrlState> {
        for s in &mut self.states {
            s.sr = RouterStatus::Normal;
            s.table.valid = true;
        }
        self.states
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReconfigOutcome {
    pub initiator: NodeId,
    pub start_clock: u64,
    pub tables: Vec<RoutingTable>,
    pub marks: Vec<[PortMark; 4]>,
    pub alerts: Vec<bool>,
    pub partitions: Vec<NodeId>,
    pub duration_cycles: u64,
}

impl ReconfigOutcome {
    pub fn end_clock(&self) -> u64 {
        self.start_clock + self.duration_cycles
    }

    pub fn reachable(&self, from: NodeId, to: NodeId) -> bool {
        self.partitions[from.0] == self.partitions[to.0]
    }

    /// Human-readable dump used for golden-file comparison.
    pub fn report(&self, topo: &MeshTopology) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# hermes-noc reconfiguration report");
        let _ = writeln!(s, "mesh {}x{}", topo.kx(), topo.ky());
        let _ = writeln!(s, "initiator {}", self.initiator);
        let _ = writeln!(s, "duration {}", self.duration_cycles);
        for n in topo.nodes() {
            let _ = write!(s, "node {} marks", n);
            for d in Direction::ALL {
                let c = if topo.neighbor(n, d).is_none() {
                    '-'
                } else if topo.is_faulty(UniLink::new(n, d)) {
                    'X'
                } else {
                    match self.marks[n.0][d.index()] {
                        PortMark::Up => 'U',
                        PortMark::Down => 'D',
                        PortMark::Unmarked => '-',
                    }
                };
                let _ = write!(s, " {}:{}", d.letter(), c);
            }
            let _ = writeln!(
                s,
                " alert {} partition {}",
                u8::from(self.alerts[n.0]),
                self.partitions[n.0]
            );
        }
        for n in topo.nodes() {
            let _ = write!(s, "table {}", n);
            for (dst, e) in self.tables[n.0].entries.iter().enumerate() {
                let _ = write!(s, " {}:{}", dst, e);
            }
            s.push('\n');
        }
        s
    }
}

/// Partition labels: two nodes share a label iff each holds a route to the
/// other. Labels are the smallest member id.
pub fn detect_partitions(states: &[RouterCtrlState]) -> Vec<NodeId> {
    let n = states.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in a + 1..n {
            if !states[a].table.entries[b].is_empty() && !states[b].table.entries[a].is_empty() {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut min_member = vec![usize::MAX; n];
    for x in 0..n {
        let r = find(&mut parent, x);
        min_member[r] = min_member[r].min(x);
    }
    (0..n)
        .map(|x| {
            let r = find(&mut parent, x);
            NodeId(min_member[r])
        })
        .collect()
}

/// Runs a full `N²`-cycle epoch starting with `initiator`'s window; the
/// remaining nodes follow in modulo order.
pub fn run_reconfiguration(
    topo: &MeshTopology,
    initiator: NodeId,
    start_clock: u64,
) -> ReconfigOutcome {
    let n = topo.node_count();
    let mut engine = ReconfigEngine::new(topo);
    let epoch = (n * n) as u64;
    let base = initiator.0 as u64 * n as u64;
    for k in 0..epoch {
        let (root, cycle) = extract_root_schedule(base + k, n);
        engine.step_broadcast_cycle(root, cycle);
    }
    let states = engine.finish();
    let partitions = detect_partitions(&states);
    ReconfigOutcome {
        initiator,
        start_clock,
        marks: states.iter().map(|s| s.port_mark).collect(),
        alerts: states.iter().map(|s| s.partition_alert).collect(),
        tables: states.into_iter().map(|s| s.table).collect(),
        partitions,
        duration_cycles: epoch,
    }
}
