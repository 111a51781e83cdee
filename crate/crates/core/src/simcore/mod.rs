//! Cycle-accurate wormhole network: routers, links, credits and network
//! interfaces, plus the freeze/reconfigure path for runtime faults.

mod router;

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reconfig::{run_reconfiguration, select_initiator, ReconfigOutcome, RoutingTable};
use crate::routing::{
    initial_class, select_injection_class, OutPort, RouteDecision, RoutingConfig, VcClass,
};
use crate::topology::{Direction, FaultSet, MeshTopology, NodeId, UniLink};

pub use router::{InputVc, OutputVc, Router, VcState, LOCAL_PORT, PORTS};
use router::StepCtx;

pub const BUFFER_DEPTH: usize = 5;
pub const PIPELINE_STAGES: u64 = 4;
pub const LINK_LATENCY: u64 = 1;
/// Fixed NI cost on top of router and link delays: one cycle to write the
/// head into the local buffer, one for ejection, two for the NI handshakes.
pub const INJECTION_EJECTION_OVERHEAD: u64 = 4;
pub const DEFAULT_WATCHDOG_HORIZON: u64 = 10_000;

/// Zero-load latency of a `size`-flit packet over `hops` router-to-router hops.
pub fn zero_load_formula(hops: u64, size: u64) -> u64 {
    hops * (PIPELINE_STAGES + LINK_LATENCY) + (size - 1) + INJECTION_EJECTION_OVERHEAD
}

pub type RouteOverride = Box<dyn Fn(NodeId, NodeId, VcClass) -> Option<RouteDecision> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Flit {
    pub pid: u64,
    pub src: u32,
    pub dst: u32,
    pub size: u32,
    pub head: bool,
    pub tail: bool,
    pub class: VcClass,
    pub created: u64,
    pub injected: u64,
    pub hops: u32,
    /// First cycle this flit may take part in the next pipeline stage.
    pub ready: u64,
}

#[derive(Clone, Debug)]
pub struct LinkFlit {
    pub to: NodeId,
    pub port: usize,
    pub vc: usize,
    pub sent: u64,
    pub flit: Flit,
}

#[derive(Clone, Copy, Debug)]
pub struct CreditMsg {
    pub to: NodeId,
    pub dir: Direction,
    pub vc: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EjectRecord {
    pub pid: u64,
    pub src: u32,
    pub dst: u32,
    pub size: u32,
    pub created: u64,
    pub injected: u64,
    pub ejected: u64,
    pub hops: u32,
}

impl EjectRecord {
    pub fn latency(&self) -> u64 {
        self.ejected - self.created
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectOutcome {
    Queued(u64),
    DeliveredLocally,
    RejectedUnreachable,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetStats {
    pub created_packets: u64,
    pub injected_flits: u64,
    pub delivered_flits: u64,
    pub dropped_flits: u64,
    pub delivered_packets: u64,
    pub dropped_packets: u64,
    pub rejected_unreachable: u64,
    pub local_deliveries: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub router: usize,
    pub kind: &'static str,
    pub pid: u64,
    pub vc: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckVc {
    pub router: NodeId,
    pub in_port: usize,
    pub vc: usize,
    pub pid: u64,
    pub state: VcState,
    pub out_port: Option<OutPort>,
    pub waited: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeadlockReport {
    pub cycle: u64,
    pub stuck: Vec<StuckVc>,
    /// Wait-for chain starting from the oldest stuck VC: each entry waits on
    /// the next one.
    pub chain: Vec<StuckVc>,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} VCs stalled at cycle {}; wait-for chain:",
            self.stuck.len(),
            self.cycle
        )?;
        for s in &self.chain {
            write!(f, " r{}p{}v{}(pkt {})", s.router, s.in_port, s.vc, s.pid)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub kx: usize,
    pub ky: usize,
    pub routing: RoutingConfig,
    pub buffer_depth: usize,
    pub watchdog_horizon: u64,
    pub seed: u64,
    pub record_events: bool,
}

impl NetworkConfig {
    pub fn new(kx: usize, ky: usize, routing: RoutingConfig) -> Self {
        NetworkConfig {
            kx,
            ky,
            routing,
            buffer_depth: BUFFER_DEPTH,
            watchdog_horizon: DEFAULT_WATCHDOG_HORIZON,
            seed: 0,
            record_events: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct QueuedPacket {
    pid: u64,
    dst: NodeId,
    size: u32,
    created: u64,
    drawn: VcClass,
}

#[derive(Clone, Copy, Debug)]
struct Sending {
    pkt: QueuedPacket,
    class: VcClass,
    vc: usize,
    sent: u32,
    injected: u64,
}

#[derive(Default)]
struct Ni {
    queue: VecDeque<QueuedPacket>,
    sending: Option<Sending>,
}

pub struct Network {
    cfg: NetworkConfig,
    topo: MeshTopology,
    tables: Vec<RoutingTable>,
    partitions: Vec<NodeId>,
    routers: Vec<Router>,
    nis: Vec<Ni>,
    class_rng: Vec<ChaCha8Rng>,
    clock: u64,
    links_out: Vec<LinkFlit>,
    credits_out: Vec<CreditMsg>,
    ejections: Vec<EjectRecord>,
    events: Option<Vec<Event>>,
    stats: NetStats,
    next_pid: u64,
    frozen_until: Option<u64>,
    route_override: Option<RouteOverride>,
    reconfigs: Vec<ReconfigOutcome>,
    unroutable: Vec<u64>,
    dropped: Vec<(u64, u64)>,
}

impl Network {
    /// Builds the network with `initial_faults` applied and tables from a
    /// boot-time reconfiguration epoch (not counted against the clock),
    /// initiated next to a faulty link as if the faults had just appeared.
    pub fn new(cfg: NetworkConfig, initial_faults: &FaultSet) -> Result<Self> {
        if cfg.buffer_depth == 0 {
            return Err(Error::config("buffer depth must be at least 1"));
        }
        let topo = MeshTopology::build_mesh(cfg.kx, cfg.ky)?.with_faults(initial_faults);
        let n = topo.node_count();
        let faulty = topo.faulty_links();
        let boot = run_reconfiguration(&topo, select_initiator(&topo, &faulty, 0), 0);
        let v = cfg.routing.vcs;
        let routers = topo
            .nodes()
            .map(|id| Router::new(id, v, cfg.buffer_depth))
            .collect();
        let class_rng = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c1a5);
                r.set_stream(i as u64);
                r
            })
            .collect();
        Ok(Network {
            events: cfg.record_events.then(Vec::new),
            cfg,
            tables: boot.tables.clone(),
            partitions: boot.partitions.clone(),
            topo,
            routers,
            nis: (0..n).map(|_| Ni::default()).collect(),
            class_rng,
            clock: 0,
            links_out: Vec::new(),
            credits_out: Vec::new(),
            ejections: Vec::new(),
            stats: NetStats::default(),
            next_pid: 0,
            frozen_until: None,
            route_override: None,
            reconfigs: vec![boot],
            unroutable: Vec::new(),
            dropped: Vec::new(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &MeshTopology {
        &self.topo
    }

    pub fn tables(&self) -> &[RoutingTable] {
        &self.tables
    }

    pub fn partitions(&self) -> &[NodeId] {
        &self.partitions
    }

    pub fn routers(&self) -> &[Router] {
        &self.routers
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_until.is_some_and(|u| self.clock < u)
    }

    pub fn frozen_until(&self) -> Option<u64> {
        self.frozen_until
    }

    /// Boot epoch first, then one entry per runtime fault event.
    pub fn reconfigurations(&self) -> &[ReconfigOutcome] {
        &self.reconfigs
    }

    pub fn set_route_override(&mut self, f: RouteOverride) {
        self.route_override = Some(f);
    }

    pub fn take_ejections(&mut self) -> Vec<EjectRecord> {
        std::mem::take(&mut self.ejections)
    }

    /// `(packet id, created cycle)` of queued packets dropped or rejected
    /// since the last call.
    pub fn take_dropped(&mut self) -> Vec<(u64, u64)> {
        std::mem::take(&mut self.dropped)
    }

    /// Id the next queued packet will receive.
    pub fn next_packet_id(&self) -> u64 {
        self.next_pid
    }

    pub fn max_source_queue(&self) -> usize {
        self.nis.iter().map(|ni| ni.queue.len()).max().unwrap_or(0)
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn reachable(&self, src: NodeId, dst: NodeId) -> bool {
        self.partitions[src.0] == self.partitions[dst.0]
    }

    /// Flits buffered in routers or on links.
    pub fn flits_in_network(&self) -> u64 {
        let buffered: usize = self.routers.iter().map(|r| r.flits).sum();
        (buffered + self.links_out.len()) as u64
    }

    pub fn queued_packets(&self) -> usize {
        self.nis
            .iter()
            .map(|ni| ni.queue.len() + ni.sending.is_some() as usize)
            .sum()
    }

    /// Nothing queued, in buffers or on links.
    pub fn is_idle(&self) -> bool {
        self.flits_in_network() == 0 && self.queued_packets() == 0
    }

    /// Queues a packet at `src`'s network interface.
    pub fn inject(&mut self, src: NodeId, dst: NodeId, size: u32, created: u64) -> InjectOutcome {
        assert!(size >= 1, "packets have at least one flit");
        self.stats.created_packets += 1;
        if src == dst {
            self.stats.local_deliveries += 1;
            return InjectOutcome::DeliveredLocally;
        }
        if !self.is_frozen() && !self.reachable(src, dst) {
            self.stats.rejected_unreachable += 1;
            return InjectOutcome::RejectedUnreachable;
        }
        let drawn = select_injection_class(self.cfg.routing.variant, &mut self.class_rng[src.0]);
        let pid = self.next_pid;
        self.next_pid += 1;
        self.nis[src.0].queue.push_back(QueuedPacket {
            pid,
            dst,
            size,
            created,
            drawn,
        });
        InjectOutcome::Queued(pid)
    }

    /// Advances one cycle.
    pub fn step(&mut self) {
        let t = self.clock;
        if let Some(until) = self.frozen_until {
            if t < until {
                self.clock += 1;
                return;
            }
            self.frozen_until = None;
            for r in &mut self.routers {
                for ivc in &mut r.inputs {
                    ivc.last_progress = t;
                }
            }
        }
        self.deliver_links(t);
        self.inject_flits(t);
        let mut delivered_flits = 0u64;
        let mut router_events = self.events.as_ref().map(|_| Vec::new());
        let before = self.ejections.len();
        {
            let mut ctx = StepCtx {
                topo: &self.topo,
                tables: &self.tables,
                rcfg: self.cfg.routing,
                route_override: self.route_override.as_ref(),
                links_out: &mut self.links_out,
                credits_out: &mut self.credits_out,
                ejections: &mut self.ejections,
                delivered_flits: &mut delivered_flits,
                unroutable: &mut self.unroutable,
                events: router_events.as_mut(),
            };
            for r in &mut self.routers {
                r.step(t, &mut ctx);
            }
        }
        self.stats.delivered_flits += delivered_flits;
        self.stats.delivered_packets += (self.ejections.len() - before) as u64;
        if let (Some(ev), Some(re)) = (self.events.as_mut(), router_events) {
            ev.extend(re.into_iter().map(|(cycle, router, kind, pid, vc)| Event {
                cycle,
                router,
                kind,
                pid,
                vc,
            }));
        }
        if !self.unroutable.is_empty() {
            let doomed: HashSet<u64> = self.unroutable.drain(..).collect();
            self.drop_packets(&doomed);
        }
        self.clock += 1;
    }

    pub fn run(&mut self, cycles: u64) {
        for _ in 0..cycles {
            self.step();
        }
    }

    fn deliver_links(&mut self, now: u64) {
        for lf in self.links_out.drain(..) {
            let mut flit = lf.flit;
            flit.ready = lf.sent + PIPELINE_STAGES - 1;
            self.routers[lf.to.0].accept(lf.port, lf.vc, flit, now);
        }
        let v = self.cfg.routing.vcs;
        for c in self.credits_out.drain(..) {
            self.routers[c.to.0].outputs[c.dir.index() * v + c.vc].credits += 1;
        }
    }

    fn inject_flits(&mut self, t: u64) {
        let depth = self.cfg.buffer_depth;
        for i in 0..self.nis.len() {
            let src = NodeId(i);
            if self.nis[i].sending.is_none() {
                while let Some(front) = self.nis[i].queue.front() {
                    if self.reachable(src, front.dst) {
                        break;
                    }
                    let p = self.nis[i].queue.pop_front().unwrap();
                    self.stats.rejected_unreachable += 1;
                    self.dropped.push((p.pid, p.created));
                }
                let Some(&front) = self.nis[i].queue.front() else {
                    continue;
                };
                let class = initial_class(&self.topo, front.drawn, src, front.dst);
                let router = &self.routers[i];
                let Some(vc) = self
                    .cfg
                    .routing
                    .class_vcs(class)
                    .find(|&vc| router.input(LOCAL_PORT, vc).is_free())
                else {
                    continue;
                };
                self.nis[i].queue.pop_front();
                self.nis[i].sending = Some(Sending {
                    pkt: front,
                    class,
                    vc,
                    sent: 0,
                    injected: t,
                });
            }
            let s = self.nis[i].sending.as_mut().unwrap();
            let router = &mut self.routers[i];
            if router.input(LOCAL_PORT, s.vc).buf.len() >= depth {
                continue;
            }
            let flit = Flit {
                pid: s.pkt.pid,
                src: i as u32,
                dst: s.pkt.dst.0 as u32,
                size: s.pkt.size,
                head: s.sent == 0,
                tail: s.sent + 1 == s.pkt.size,
                class: s.class,
                created: s.pkt.created,
                injected: s.injected,
                hops: 0,
                ready: t + 1,
            };
            router.accept(LOCAL_PORT, s.vc, flit, t);
            self.stats.injected_flits += 1;
            if flit.head {
                if let Some(ev) = self.events.as_mut() {
                    ev.push(Event {
                        cycle: t,
                        router: i,
                        kind: "inject",
                        pid: flit.pid,
                        vc: s.vc,
                    });
                }
            }
            s.sent += 1;
            if s.sent == s.pkt.size {
                self.nis[i].sending = None;
            }
        }
    }

    /// Removes every flit of the listed packets, returning their buffer
    /// slots and VCs.
    fn drop_packets(&mut self, doomed: &HashSet<u64>) {
        if doomed.is_empty() {
            return;
        }
        let v = self.cfg.routing.vcs;
        let mut refunds: Vec<(NodeId, usize, usize, usize)> = Vec::new();
        let mut created: HashMap<u64, u64> = HashMap::new();
        for r in &mut self.routers {
            let node = r.node;
            for port in 0..PORTS {
                for vc in 0..v {
                    let ivc = r.input_mut(port, vc);
                    let before = ivc.buf.len();
                    for f in ivc.buf.iter().filter(|f| doomed.contains(&f.pid)) {
                        created.insert(f.pid, f.created);
                    }
                    ivc.buf.retain(|f| !doomed.contains(&f.pid));
                    let removed = before - ivc.buf.len();
                    if ivc.state != VcState::Idle && doomed.contains(&ivc.pid) {
                        ivc.state = VcState::Idle;
                        ivc.head_sent = false;
                    }
                    if removed > 0 {
                        r.flits -= removed;
                        self.stats.dropped_flits += removed as u64;
                        if port < 4 {
                            refunds.push((node, port, vc, removed));
                        }
                    }
                }
            }
            for o in &mut r.outputs {
                if o.owner.is_some() && doomed.contains(&o.owner_pid) {
                    o.owner = None;
                }
            }
        }
        self.links_out.retain(|l| {
            if !doomed.contains(&l.flit.pid) {
                return true;
            }
            created.insert(l.flit.pid, l.flit.created);
            self.stats.dropped_flits += 1;
            refunds.push((l.to, l.port, l.vc, 1));
            false
        });
        for (node, port, vc, n) in refunds {
            let dir = Direction::from_index(port);
            let up = self.topo.neighbor(node, dir).unwrap();
            self.routers[up.0].outputs[dir.opposite().index() * v + vc].credits += n;
        }
        for ni in &mut self.nis {
            if let Some(s) = ni.sending {
                if doomed.contains(&s.pkt.pid) {
                    created.insert(s.pkt.pid, s.pkt.created);
                    ni.sending = None;
                }
            }
        }
        if let Some(ev) = self.events.as_mut() {
            let mut ids: Vec<u64> = doomed.iter().copied().collect();
            ids.sort_unstable();
            ev.extend(ids.into_iter().map(|pid| Event {
                cycle: self.clock,
                router: 0,
                kind: "drop",
                pid,
                vc: 0,
            }));
        }
        let mut ids: Vec<u64> = doomed.iter().copied().collect();
        ids.sort_unstable();
        self.dropped
            .extend(ids.iter().map(|&pid| (pid, created.get(&pid).copied().unwrap_or(self.clock))));
        self.stats.dropped_packets += doomed.len() as u64;
    }

    /// Applies runtime faults: in-transit transfers land, tables are rebuilt
    /// by a full reconfiguration epoch, injection and switching halt until it
    /// ends. Worms cut by a dead link or bound for an unreachable node are
    /// dropped; all other packets continue on the UD class.
    pub fn freeze_and_reconfigure(&mut self, faults: &FaultSet) -> &ReconfigOutcome {
        let now = self.clock;
        self.deliver_links(now);
        let newly: Vec<UniLink> = faults
            .victimized(&self.topo)
            .faulty
            .iter()
            .copied()
            .filter(|l| self.topo.is_healthy(*l))
            .collect();
        self.topo.apply_faults(faults);
        // an epoch already running is restarted with the merged fault set
        let start = now;
        let initiator = select_initiator(&self.topo, &newly, start);
        let outcome = run_reconfiguration(&self.topo, initiator, start);
        self.tables = outcome.tables.clone();
        self.partitions = outcome.partitions.clone();
        self.frozen_until = Some(outcome.end_clock());
        self.salvage(outcome.end_clock());
        self.reconfigs.push(outcome);
        self.reconfigs.last().unwrap()
    }

    fn salvage(&mut self, resume: u64) {
        let mut doomed = HashSet::new();
        for r in &mut self.routers {
            let node = r.node;
            for idx in 0..r.inputs.len() {
                let ivc = &r.inputs[idx];
                match (ivc.state, ivc.out_port) {
                    (VcState::Active, OutPort::Dir(d)) if !self.topo.port_healthy(node, d) => {
                        if ivc.head_sent {
                            doomed.insert(ivc.pid);
                            continue;
                        }
                        let ov = ivc.out_vc;
                        let v = r.vcs();
                        r.outputs[d.index() * v + ov].owner = None;
                        r.inputs[idx].state = VcState::Idle;
                    }
                    (VcState::VcAlloc, _) => r.inputs[idx].state = VcState::Idle,
                    _ => {}
                }
                let ivc = &mut r.inputs[idx];
                if ivc.state == VcState::Idle {
                    if let Some(h) = ivc.buf.front_mut() {
                        h.class = VcClass::Ud;
                        h.ready = h.ready.max(resume);
                        let dst = NodeId(h.dst as usize);
                        if dst != node && self.tables[node.0].entry(dst).is_empty() {
                            doomed.insert(h.pid);
                        }
                    }
                } else if let Some(f) = ivc.buf.front() {
                    if self.partitions[node.0] != self.partitions[f.dst as usize] {
                        doomed.insert(ivc.pid);
                    }
                }
            }
        }
        for ni in &mut self.nis {
            if let Some(s) = ni.sending.as_mut() {
                s.class = VcClass::Ud;
            }
        }
        self.drop_packets(&doomed);
    }

    /// Scans for VCs holding flits that have not moved for longer than the
    /// configured horizon and whose whole wait-for chain is stalled too.
    pub fn watchdog_check(&self) -> std::result::Result<(), Box<DeadlockReport>> {
        if self.is_frozen() {
            return Ok(());
        }
        let horizon = self.cfg.watchdog_horizon;
        let now = self.clock;
        let mut stuck: Vec<StuckVc> = Vec::new();
        for r in &self.routers {
            if r.flits == 0 {
                continue;
            }
            for port in 0..PORTS {
                for vc in 0..r.vcs() {
                    let ivc = r.input(port, vc);
                    let Some(front) = ivc.buf.front() else {
                        continue;
                    };
                    let waited = now.saturating_sub(ivc.last_progress);
                    if waited > horizon {
                        stuck.push(StuckVc {
                            router: r.node,
                            in_port: port,
                            vc,
                            pid: front.pid,
                            state: ivc.state,
                            out_port: (ivc.state != VcState::Idle).then_some(ivc.out_port),
                            waited,
                        });
                    }
                }
            }
        }
        stuck.sort_by_key(|s| std::cmp::Reverse(s.waited));
        // A stall is a deadlock only if nothing it transitively waits on has
        // moved either; otherwise it is congestion that will clear.
        let chain = stuck
            .iter()
            .map(|s| self.wait_chain(s))
            .find(|c| c.iter().all(|m| m.waited > horizon));
        match chain {
            None => Ok(()),
            Some(chain) => Err(Box::new(DeadlockReport {
                cycle: now,
                stuck,
                chain,
            })),
        }
    }

    fn wait_chain(&self, start: &StuckVc) -> Vec<StuckVc> {
        let v = self.cfg.routing.vcs;
        let mut chain = vec![start.clone()];
        let mut seen = HashSet::from([(start.router, start.in_port, start.vc)]);
        let mut cur = (start.router, start.in_port, start.vc);
        while chain.len() < 64 {
            let r = &self.routers[cur.0 .0];
            let ivc = r.input(cur.1, cur.2);
            let next = match (ivc.state, ivc.out_port) {
                (VcState::Active, OutPort::Dir(d)) => self
                    .topo
                    .neighbor(r.node, d)
                    .map(|n| (n, d.opposite().index(), ivc.out_vc)),
                (VcState::VcAlloc, OutPort::Dir(d)) => self
                    .cfg
                    .routing
                    .class_vcs(ivc.class)
                    .find_map(|ov| r.outputs[d.index() * v + ov].owner)
                    .map(|owner| (r.node, owner / v, owner % v))
                    .or_else(|| {
                        let n = self.topo.neighbor(r.node, d)?;
                        let ov = self.cfg.routing.class_vcs(ivc.class).start;
                        Some((n, d.opposite().index(), ov))
                    }),
                _ => None,
            };
            let Some(next) = next else {
                break;
            };
            if !seen.insert(next) {
                break;
            }
            let nr = &self.routers[next.0 .0];
            let nivc = nr.input(next.1, next.2);
            chain.push(StuckVc {
                router: next.0,
                in_port: next.1,
                vc: next.2,
                pid: nivc.buf.front().map_or(nivc.pid, |f| f.pid),
                state: nivc.state,
                out_port: (nivc.state != VcState::Idle).then_some(nivc.out_port),
                waited: self.clock.saturating_sub(nivc.last_progress),
            });
            cur = next;
        }
        chain
    }

    /// Checks that on every link `credits + flits in flight + flits buffered
    /// downstream + credits in flight == buffer depth` for each VC.
    pub fn check_credit_invariant(&self) -> std::result::Result<(), String> {
        let v = self.cfg.routing.vcs;
        let depth = self.cfg.buffer_depth;
        for r in &self.routers {
            for d in Direction::ALL {
                let Some(m) = self.topo.neighbor(r.node, d) else {
                    continue;
                };
                let in_port = d.opposite().index();
                for vc in 0..v {
                    let credits = r.outputs[d.index() * v + vc].credits;
                    let on_link = self
                        .links_out
                        .iter()
                        .filter(|l| l.to == m && l.port == in_port && l.vc == vc)
                        .count();
                    let buffered = self.routers[m.0].input(in_port, vc).buf.len();
                    let returning = self
                        .credits_out
                        .iter()
                        .filter(|c| c.to == r.node && c.dir == d && c.vc == vc)
                        .count();
                    let total = credits + on_link + buffered + returning;
                    if total != depth {
                        return Err(format!(
                            "link {}{} vc{}: {credits}+{on_link}+{buffered}+{returning} != {depth}",
                            r.node,
                            d.letter(),
                            vc
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `injected == delivered + dropped + in network`, in flits.
    pub fn conservation_holds(&self) -> bool {
        let s = self.stats;
        s.injected_flits == s.delivered_flits + s.dropped_flits + self.flits_in_network()
    }

    /// Digest of the architectural state, for determinism checks. The clock
    /// itself is not included.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for r in &self.routers {
            for ivc in &r.inputs {
                ivc.state.hash(&mut h);
                ivc.pid.hash(&mut h);
                ivc.out_vc.hash(&mut h);
                for f in &ivc.buf {
                    f.hash(&mut h);
                }
            }
            for o in &r.outputs {
                o.credits.hash(&mut h);
                o.owner.hash(&mut h);
            }
        }
        for ni in &self.nis {
            ni.queue.len().hash(&mut h);
        }
        self.stats.delivered_flits.hash(&mut h);
        self.stats.dropped_flits.hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests;
