//! Input-queued VC router with a 4-stage RC → VA → SA → ST pipeline.
//!
//! Timing, for a head flit whose RC happens in cycle `c`: VA in `c+1`, SA in
//! `c+2`, crossbar in `c+3`, link in `c+4`, downstream RC in `c+5`. Stages of
//! one router are evaluated SA → VA → RC so a flit never advances twice in a
//! cycle.

use std::collections::VecDeque;

use crate::reconfig::RoutingTable;
use crate::routing::{
    route_packet, NodeCtx, OutPort, PacketHeader, RouteDecision, RoutingConfig, VcClass,
};
use crate::topology::{Direction, MeshTopology, NodeId};

use super::{CreditMsg, EjectRecord, Flit, LinkFlit, RouteOverride};

pub const LOCAL_PORT: usize = 4;
pub const PORTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VcState {
    Idle,
    /// Route computed; waiting for an output VC.
    VcAlloc,
    /// Holds an output VC; flits compete in switch allocation.
    Active,
}

#[derive(Clone, Debug)]
pub struct InputVc {
    pub buf: VecDeque<Flit>,
    pub state: VcState,
    pub out_port: OutPort,
    pub out_vc: usize,
    pub class: VcClass,
    pub pid: u64,
    /// Earliest cycle the VC state machine may act again.
    pub ready: u64,
    pub head_sent: bool,
    pub last_progress: u64,
}

impl InputVc {
    fn new(depth: usize) -> Self {
        InputVc {
            buf: VecDeque::with_capacity(depth),
            state: VcState::Idle,
            out_port: OutPort::Local,
            out_vc: 0,
            class: VcClass::Ud,
            pid: 0,
            ready: 0,
            head_sent: false,
            last_progress: 0,
        }
    }

    pub fn is_free(&self) -> bool {
        self.state == VcState::Idle && self.buf.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct OutputVc {
    pub credits: usize,
    pub owner: Option<usize>,
    pub owner_pid: u64,
}

pub struct Router {
    pub node: NodeId,
    vcs: usize,
    /// `[port * vcs + vc]`, ports 0..4 are N/E/S/W arrivals, 4 is injection.
    pub inputs: Vec<InputVc>,
    /// `[dir * vcs + vc]` for the four link outputs.
    pub outputs: Vec<OutputVc>,
    pub flits: usize,
    sa_in_rr: [usize; PORTS],
    sa_out_rr: [usize; PORTS],
    va_rr: [usize; 4],
}

/// Everything a router touches outside itself during one cycle.
pub struct StepCtx<'a> {
    pub topo: &'a MeshTopology,
    pub tables: &'a [RoutingTable],
    pub rcfg: RoutingConfig,
    pub route_override: Option<&'a RouteOverride>,
    pub links_out: &'a mut Vec<LinkFlit>,
    pub credits_out: &'a mut Vec<CreditMsg>,
    pub ejections: &'a mut Vec<EjectRecord>,
    pub delivered_flits: &'a mut u64,
    pub unroutable: &'a mut Vec<u64>,
    pub events: Option<&'a mut Vec<(u64, usize, &'static str, u64, usize)>>,
}

impl Router {
    pub fn new(node: NodeId, vcs: usize, depth: usize) -> Self {
        Router {
            node,
            vcs,
            inputs: (0..PORTS * vcs).map(|_| InputVc::new(depth)).collect(),
            outputs: (0..4 * vcs)
                .map(|_| OutputVc {
                    credits: depth,
                    owner: None,
                    owner_pid: 0,
                })
                .collect(),
            flits: 0,
            sa_in_rr: [0; PORTS],
            sa_out_rr: [0; PORTS],
            va_rr: [0; 4],
        }
    }

    pub fn vcs(&self) -> usize {
        self.vcs
    }

    pub fn input(&self, port: usize, vc: usize) -> &InputVc {
        &self.inputs[port * self.vcs + vc]
    }

    pub fn input_mut(&mut self, port: usize, vc: usize) -> &mut InputVc {
        &mut self.inputs[port * self.vcs + vc]
    }

    pub fn accept(&mut self, port: usize, vc: usize, flit: Flit, now: u64) {
        let ivc = self.input_mut(port, vc);
        if ivc.buf.is_empty() {
            ivc.last_progress = now;
        }
        ivc.buf.push_back(flit);
        self.flits += 1;
    }

    pub fn step(&mut self, t: u64, ctx: &mut StepCtx<'_>) {
        if self.flits == 0 {
            return;
        }
        self.switch_allocate(t, ctx);
        self.vc_allocate(t, ctx.rcfg);
        self.route_compute(t, ctx);
    }

    fn switch_allocate(&mut self, t: u64, ctx: &mut StepCtx<'_>) {
        let v = self.vcs;
        // input arbitration: one VC per input port
        let mut req: [Option<(usize, usize)>; PORTS] = [None; PORTS];
        for (p, slot) in req.iter_mut().enumerate() {
            for k in 0..v {
                let vc = (self.sa_in_rr[p] + k) % v;
                let ivc = &self.inputs[p * v + vc];
                if ivc.state != VcState::Active || ivc.ready > t {
                    continue;
                }
                let Some(front) = ivc.buf.front() else {
                    continue;
                };
                if front.ready > t {
                    continue;
                }
                let o = ivc.out_port.index();
                if o != LOCAL_PORT && self.outputs[o * v + ivc.out_vc].credits == 0 {
                    continue;
                }
                *slot = Some((vc, o));
                break;
            }
        }
        // output arbitration
        for o in 0..PORTS {
            let winner = (0..PORTS)
                .map(|k| (self.sa_out_rr[o] + k) % PORTS)
                .find(|&p| matches!(req[p], Some((_, oo)) if oo == o));
            let Some(p) = winner else {
                continue;
            };
            let (vc, _) = req[p].unwrap();
            self.sa_in_rr[p] = (vc + 1) % v;
            self.sa_out_rr[o] = (p + 1) % PORTS;
            self.grant(t, p, vc, o, ctx);
        }
    }

    fn grant(&mut self, t: u64, p: usize, vc: usize, o: usize, ctx: &mut StepCtx<'_>) {
        let v = self.vcs;
        let idx = p * v + vc;
        let ivc = &mut self.inputs[idx];
        let mut flit = ivc.buf.pop_front().expect("granted VC has a flit");
        ivc.last_progress = t;
        self.flits -= 1;
        if flit.head {
            ivc.head_sent = true;
        }
        let out_vc = ivc.out_vc;
        if flit.tail {
            ivc.state = VcState::Idle;
            ivc.head_sent = false;
        }
        if p != LOCAL_PORT {
            let dir = Direction::from_index(p);
            let upstream = ctx.topo.neighbor(self.node, dir).expect("input port has a neighbor");
            ctx.credits_out.push(CreditMsg {
                to: upstream,
                dir: dir.opposite(),
                vc,
            });
        }
        if o == LOCAL_PORT {
            *ctx.delivered_flits += 1;
            if flit.tail {
                ctx.ejections.push(EjectRecord {
                    pid: flit.pid,
                    src: flit.src,
                    dst: flit.dst,
                    size: flit.size,
                    created: flit.created,
                    injected: flit.injected,
                    ejected: t + 1,
                    hops: flit.hops,
                });
                if let Some(ev) = ctx.events.as_deref_mut() {
                    ev.push((t + 1, self.node.0, "eject", flit.pid, vc));
                }
            }
            return;
        }
        let ovc = &mut self.outputs[o * v + out_vc];
        ovc.credits -= 1;
        if flit.tail {
            ovc.owner = None;
        }
        let dir = Direction::from_index(o);
        flit.hops += 1;
        let to = ctx.topo.neighbor(self.node, dir).expect("output port has a neighbor");
        ctx.links_out.push(LinkFlit {
            to,
            port: dir.opposite().index(),
            vc: out_vc,
            sent: t,
            flit,
        });
    }

    /// Separable allocation: each output port grants its free VCs to
    /// waiting input VCs in round-robin order, the pointer moving past the
    /// winner.
    fn vc_allocate(&mut self, t: u64, rcfg: RoutingConfig) {
        let v = self.vcs;
        let total = PORTS * v;
        let mut waiting = [false; 4];
        for idx in 0..total {
            let ivc = &mut self.inputs[idx];
            if ivc.state != VcState::VcAlloc || ivc.ready > t {
                continue;
            }
            match ivc.out_port {
                OutPort::Local => {
                    ivc.out_vc = 0;
                    ivc.state = VcState::Active;
                    ivc.ready = t + 1;
                }
                OutPort::Dir(d) => waiting[d.index()] = true,
            }
        }
        for (o, _) in waiting.iter().enumerate().filter(|(_, w)| **w) {
            for ov in 0..v {
                if self.outputs[o * v + ov].owner.is_some() {
                    continue;
                }
                let class = rcfg.class_of_vc(ov);
                let start = self.va_rr[o];
                let winner = (0..total).map(|k| (start + k) % total).find(|&idx| {
                    let ivc = &self.inputs[idx];
                    ivc.state == VcState::VcAlloc
                        && ivc.ready <= t
                        && ivc.out_port == OutPort::Dir(Direction::from_index(o))
                        && ivc.class == class
                });
                let Some(idx) = winner else {
                    continue;
                };
                self.va_rr[o] = (idx + 1) % total;
                let out = &mut self.outputs[o * v + ov];
                out.owner = Some(idx);
                out.owner_pid = self.inputs[idx].pid;
                let ivc = &mut self.inputs[idx];
                ivc.out_vc = ov;
                ivc.state = VcState::Active;
                ivc.ready = t + 1;
            }
        }
    }

    fn route_compute(&mut self, t: u64, ctx: &mut StepCtx<'_>) {
        for ivc in self.inputs.iter_mut() {
            if ivc.state != VcState::Idle {
                continue;
            }
            let Some(head) = ivc.buf.front_mut() else {
                continue;
            };
            if head.ready > t {
                continue;
            }
            debug_assert!(head.head, "idle VC must start with a head flit");
            let dst = NodeId(head.dst as usize);
            let decision: Option<RouteDecision> = match ctx.route_override {
                Some(f) => f(self.node, dst, head.class),
                None => route_packet(
                    NodeCtx {
                        topo: ctx.topo,
                        table: &ctx.tables[self.node.0],
                        node: self.node,
                    },
                    PacketHeader {
                        dst,
                        class: head.class,
                    },
                )
                .ok(),
            };
            match decision {
                Some(dec) => {
                    head.class = dec.vc_class;
                    ivc.class = dec.vc_class;
                    ivc.out_port = dec.out_port;
                    ivc.pid = head.pid;
                    ivc.state = VcState::VcAlloc;
                    ivc.ready = t + 1;
                }
                None => ctx.unroutable.push(head.pid),
            }
        }
    }
}
