//! Per-hop routing: dimension-order in fault-free regions, Up*/Down* table
//! lookups once a packet meets a faulty link, and VC class mapping.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::reconfig::RoutingTable;
use crate::topology::{DirSet, Direction, MeshTopology, NodeId};

pub mod cdg;

pub use cdg::{build_cdg, check_acyclic, Cdg, ChannelId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoutingVariant {
    /// Up*/Down* for every packet (Ariadne-style baseline).
    PureUd,
    HXy,
    HO1Turn,
}

impl RoutingVariant {
    pub fn min_vcs(self) -> usize {
        match self {
            RoutingVariant::PureUd => 1,
            RoutingVariant::HXy => 2,
            RoutingVariant::HO1Turn => 3,
        }
    }

    pub const ALL: [RoutingVariant; 3] = [
        RoutingVariant::PureUd,
        RoutingVariant::HXy,
        RoutingVariant::HO1Turn,
    ];
}

impl fmt::Display for RoutingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingVariant::PureUd => "pure-ud",
            RoutingVariant::HXy => "h-xy",
            RoutingVariant::HO1Turn => "h-o1turn",
        })
    }
}

impl FromStr for RoutingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pure-ud" | "pureud" | "ud" | "ariadne" => Ok(RoutingVariant::PureUd),
            "h-xy" | "hxy" => Ok(RoutingVariant::HXy),
            "h-o1turn" | "ho1turn" | "o1turn" => Ok(RoutingVariant::HO1Turn),
            other => Err(Error::config(format!("unknown routing variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VcClass {
    Xy,
    Yx,
    Ud,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoutingConfig {
    pub variant: RoutingVariant,
    pub vcs: usize,
}

impl RoutingConfig {
    pub fn new(variant: RoutingVariant, vcs: usize) -> Result<Self> {
        if !(1..=3).contains(&vcs) {
            return Err(Error::config(format!("vcs per port must be 1..=3, got {vcs}")));
        }
        if vcs < variant.min_vcs() {
            return Err(Error::config(format!(
                "{variant} needs at least {} VCs, got {vcs}",
                variant.min_vcs()
            )));
        }
        Ok(RoutingConfig { variant, vcs })
    }

    /// VC indices a packet of `class` may occupy. Hybrid variants keep a
    /// single Up*/Down* VC, the last one; H_XY gives every other VC to XY.
    pub fn class_vcs(&self, class: VcClass) -> std::ops::Range<usize> {
        match (self.variant, class) {
            (RoutingVariant::PureUd, _) => 0..self.vcs,
            (RoutingVariant::HXy, VcClass::Xy) => 0..self.vcs - 1,
            (RoutingVariant::HXy, VcClass::Ud) => self.vcs - 1..self.vcs,
            (RoutingVariant::HO1Turn, VcClass::Xy) => 0..1,
            (RoutingVariant::HO1Turn, VcClass::Yx) => 1..2,
            (RoutingVariant::HO1Turn, VcClass::Ud) => 2..self.vcs,
            (RoutingVariant::HXy, VcClass::Yx) => 0..0,
        }
    }

    pub fn class_of_vc(&self, vc: usize) -> VcClass {
        match (self.variant, vc) {
            (RoutingVariant::PureUd, _) => VcClass::Ud,
            (_, v) if v + 1 == self.vcs => VcClass::Ud,
            (RoutingVariant::HO1Turn, 1) => VcClass::Yx,
            _ => VcClass::Xy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutPort {
    Dir(Direction),
    Local,
}

impl OutPort {
    pub fn index(self) -> usize {
        match self {
            OutPort::Dir(d) => d.index(),
            OutPort::Local => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouteDecision {
    pub out_port: OutPort,
    pub vc_class: VcClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unreachable;

impl fmt::Display for Unreachable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("destination unreachable")
    }
}

impl std::error::Error for Unreachable {}

/// Productive XY direction (x first). `None` when `cur == dst`.
pub fn route_xy(topo: &MeshTopology, cur: NodeId, dst: NodeId) -> Option<Direction> {
    let (cx, cy) = topo.coords(cur);
    let (dx, dy) = topo.coords(dst);
    if cx < dx {
        Some(Direction::East)
    } else if cx > dx {
        Some(Direction::West)
    } else if cy < dy {
        Some(Direction::South)
    } else if cy > dy {
        Some(Direction::North)
    } else {
        None
    }
}

pub fn route_yx(topo: &MeshTopology, cur: NodeId, dst: NodeId) -> Option<Direction> {
    let (cx, cy) = topo.coords(cur);
    let (dx, dy) = topo.coords(dst);
    if cy < dy {
        Some(Direction::South)
    } else if cy > dy {
        Some(Direction::North)
    } else if cx < dx {
        Some(Direction::East)
    } else if cx > dx {
        Some(Direction::West)
    } else {
        None
    }
}

/// Next DOR hop for a packet in a DOR class.
pub fn dor_port(
    topo: &MeshTopology,
    class: VcClass,
    cur: NodeId,
    dst: NodeId,
) -> Option<Direction> {
    match class {
        VcClass::Xy => route_xy(topo, cur, dst),
        VcClass::Yx => route_yx(topo, cur, dst),
        VcClass::Ud => None,
    }
}

pub fn select_injection_class<R: Rng + ?Sized>(variant: RoutingVariant, rng: &mut R) -> VcClass {
    match variant {
        RoutingVariant::PureUd => VcClass::Ud,
        RoutingVariant::HXy => VcClass::Xy,
        RoutingVariant::HO1Turn => {
            if rng.random_bool(0.5) {
                VcClass::Xy
            } else {
                VcClass::Yx
            }
        }
    }
}

/// Class a packet starts with: the drawn DOR class, unless its very first
/// DOR hop is already faulty.
pub fn initial_class(topo: &MeshTopology, drawn: VcClass, src: NodeId, dst: NodeId) -> VcClass {
    match dor_port(topo, drawn, src, dst) {
        Some(d) if !topo.port_healthy(src, d) => VcClass::Ud,
        _ => drawn,
    }
}

/// Among recorded directions, the one whose neighbor is closest to `dst`;
/// ties broken N > E > S > W.
pub fn ud_select_port(
    topo: &MeshTopology,
    entry: DirSet,
    cur: NodeId,
    dst: NodeId,
) -> Result<Direction, Unreachable> {
    entry
        .iter()
        .filter_map(|d| topo.neighbor(cur, d).map(|n| (topo.manhattan(n, dst), d)))
        .min_by_key(|&(dist, d)| (dist, d.index()))
        .map(|(_, d)| d)
        .ok_or(Unreachable)
}

#[derive(Clone, Copy)]
pub struct NodeCtx<'a> {
    pub topo: &'a MeshTopology,
    pub table: &'a RoutingTable,
    pub node: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketHeader {
    pub dst: NodeId,
    pub class: VcClass,
}

pub fn route_packet(ctx: NodeCtx<'_>, hdr: PacketHeader) -> Result<RouteDecision, Unreachable> {
    if ctx.node == hdr.dst {
        return Ok(RouteDecision {
            out_port: OutPort::Local,
            vc_class: hdr.class,
        });
    }
    if let Some(d) = dor_port(ctx.topo, hdr.class, ctx.node, hdr.dst) {
        if ctx.topo.port_healthy(ctx.node, d) {
            return Ok(RouteDecision {
                out_port: OutPort::Dir(d),
                vc_class: hdr.class,
            });
        }
    }
    let d = ud_select_port(ctx.topo, ctx.table.entry(hdr.dst), ctx.node, hdr.dst)?;
    Ok(RouteDecision {
        out_port: OutPort::Dir(d),
        vc_class: VcClass::Ud,
    })
}

/// Hop-by-hop walk of `route_packet`; returns the traversed nodes and the
/// class after each hop, or `Unreachable`. Gives up after `max_hops`.
pub fn walk_route(
    topo: &MeshTopology,
    tables: &[RoutingTable],
    src: NodeId,
    dst: NodeId,
    class: VcClass,
    max_hops: usize,
) -> Result<Vec<(NodeId, VcClass)>, Unreachable> {
    let mut cur = src;
    let mut class = initial_class(topo, class, src, dst);
    let mut path = vec![(cur, class)];
    while cur != dst {
        if path.len() > max_hops {
            return Err(Unreachable);
        }
        let ctx = NodeCtx {
            topo,
            table: &tables[cur.0],
            node: cur,
        };
        let dec = route_packet(ctx, PacketHeader { dst, class })?;
        let OutPort::Dir(d) = dec.out_port else {
            unreachable!("local port only at destination")
        };
        cur = topo.neighbor(cur, d).expect("route leaves the mesh");
        class = dec.vc_class;
        path.push((cur, class));
    }
    Ok(path)
}
