//! Extended channel dependency graph over (link, VC) channels.

use std::collections::HashMap;
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;

use super::{
    route_packet, route_xy, route_yx, ud_select_port, NodeCtx, OutPort, PacketHeader,
    RoutingConfig, RoutingVariant, VcClass,
};
use crate::reconfig::RoutingTable;
use crate::topology::{MeshTopology, NodeId, UniLink};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub link: UniLink,
    pub vc: usize,
}

pub struct Cdg {
    pub graph: DiGraph<ChannelId, ()>,
    index: HashMap<ChannelId, NodeIndex>,
}

impl Cdg {
    pub fn new() -> Self {
        Cdg {
            graph: DiGraph::new(),
            index: HashMap::new(),
        }
    }

    pub fn add_channel(&mut self, c: ChannelId) -> NodeIndex {
        *self
            .index
            .entry(c)
            .or_insert_with(|| self.graph.add_node(c))
    }

    pub fn add_dependency(&mut self, from: ChannelId, to: ChannelId) {
        let a = self.add_channel(from);
        let b = self.add_channel(to);
        if self.graph.find_edge(a, b).is_none() {
            self.graph.add_edge(a, b, ());
        }
    }

    pub fn channel_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn dependency_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn dependencies(&self) -> impl Iterator<Item = (ChannelId, ChannelId)> + '_ {
        self.graph
            .edge_references()
            .map(|e| (self.graph[e.source()], self.graph[e.target()]))
    }

    pub fn to_dot(&self) -> String {
        let name = |c: ChannelId| format!("\"{}{}v{}\"", c.link.src, c.link.dir.letter(), c.vc);
        let mut s = String::from("digraph cdg {\n");
        for c in self.graph.node_weights() {
            let _ = writeln!(s, "  {};", name(*c));
        }
        for (a, b) in self.dependencies() {
            let _ = writeln!(s, "  {} -> {};", name(a), name(b));
        }
        s.push_str("}\n");
        s
    }
}

impl Default for Cdg {
    fn default() -> Self {
        Self::new()
    }
}

/// Channel dependencies induced by `route_packet`. A channel `p→n` on a DOR
/// VC carries packets for `d` when the DOR hop from `p` toward `d` is `p→n`;
/// on a UD VC when `p`'s table selection for `d` is `p→n`.
pub fn build_cdg(topo: &MeshTopology, tables: &[RoutingTable], rcfg: RoutingConfig) -> Cdg {
    let mut cdg = Cdg::new();
    for link in topo.links().filter(|l| topo.is_healthy(*l)) {
        for vc in 0..rcfg.vcs {
            cdg.add_channel(ChannelId { link, vc });
        }
    }
    let classes: &[VcClass] = match rcfg.variant {
        RoutingVariant::PureUd => &[VcClass::Ud],
        RoutingVariant::HXy => &[VcClass::Xy, VcClass::Ud],
        RoutingVariant::HO1Turn => &[VcClass::Xy, VcClass::Yx, VcClass::Ud],
    };
    for link in topo.links().filter(|l| topo.is_healthy(*l)) {
        let p = link.src;
        let n = topo.link_dst(link).unwrap();
        for dst in topo.nodes() {
            if dst == n || dst == p {
                continue;
            }
            for &class in classes {
                let carries = match class {
                    VcClass::Xy => route_xy(topo, p, dst) == Some(link.dir),
                    VcClass::Yx => route_yx(topo, p, dst) == Some(link.dir),
                    VcClass::Ud => {
                        ud_select_port(topo, tables[p.0].entry(dst), p, dst) == Ok(link.dir)
                    }
                };
                if !carries {
                    continue;
                }
                let ctx = NodeCtx {
                    topo,
                    table: &tables[n.0],
                    node: n,
                };
                let Ok(dec) = route_packet(ctx, PacketHeader { dst, class }) else {
                    continue;
                };
                let OutPort::Dir(d) = dec.out_port else {
                    continue;
                };
                let next = UniLink::new(n, d);
                for vin in rcfg.class_vcs(class) {
                    for vout in rcfg.class_vcs(dec.vc_class) {
                        cdg.add_dependency(
                            ChannelId { link, vc: vin },
                            ChannelId { link: next, vc: vout },
                        );
                    }
                }
            }
        }
    }
    cdg
}

/// `Ok(())` if acyclic, otherwise a witness cycle (first channel repeated
/// implicitly at the end).
pub fn check_acyclic(cdg: &Cdg) -> Result<(), Vec<ChannelId>> {
    let g = &cdg.graph;
    for scc in tarjan_scc(g) {
        let start = scc[0];
        if scc.len() == 1 && g.find_edge(start, start).is_none() {
            continue;
        }
        // BFS inside the component from `start` back to itself.
        let members: std::collections::HashSet<NodeIndex> = scc.iter().copied().collect();
        let mut prev: HashMap<NodeIndex, NodeIndex> = HashMap::new();
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in g.neighbors(u) {
                if !members.contains(&v) {
                    continue;
                }
                if v == start {
                    let mut cycle = vec![g[u]];
                    let mut cur = u;
                    while cur != start {
                        cur = prev[&cur];
                        cycle.push(g[cur]);
                    }
                    cycle.reverse();
                    return Err(cycle);
                }
                if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(v) {
                    e.insert(u);
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(())
}

/// True if no dependency leaves the UD layer for a DOR VC.
pub fn ud_layer_closed(cdg: &Cdg, rcfg: RoutingConfig) -> bool {
    cdg.dependencies().all(|(a, b)| {
        rcfg.class_of_vc(a.vc) != VcClass::Ud || rcfg.class_of_vc(b.vc) == VcClass::Ud
    })
}

pub fn channels_of(cdg: &Cdg, node: NodeId) -> Vec<ChannelId> {
    cdg.graph
        .node_weights()
        .filter(|c| c.link.src == node)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconfig::run_reconfiguration;
    use crate::topology::{Direction, FaultSet};

    #[test]
    fn empty_graph_is_acyclic() {
        assert_eq!(check_acyclic(&Cdg::new()), Ok(()));
    }

    #[test]
    fn two_cycle_witness() {
        let mut c = Cdg::new();
        let a = ChannelId {
            link: UniLink::new(NodeId(0), Direction::East),
            vc: 0,
        };
        let b = ChannelId {
            link: UniLink::new(NodeId(1), Direction::West),
            vc: 0,
        };
        c.add_dependency(a, b);
        c.add_dependency(b, a);
        let w = check_acyclic(&c).unwrap_err();
        assert_eq!(w.len(), 2);
        assert!(w.contains(&a) && w.contains(&b));
    }

    #[test]
    fn fault_free_hxy_has_no_ud_to_dor_edges() {
        let t = MeshTopology::build_mesh(4, 4).unwrap();
        let o = run_reconfiguration(&t, NodeId(0), 0);
        let rcfg = RoutingConfig::new(RoutingVariant::HXy, 2).unwrap();
        let cdg = build_cdg(&t, &o.tables, rcfg);
        assert!(ud_layer_closed(&cdg, rcfg));
        assert_eq!(check_acyclic(&cdg), Ok(()));
        assert_eq!(cdg.channel_count(), t.unidirectional_link_count() * 2);
    }

    #[test]
    fn faulty_variants_acyclic() {
        let t = MeshTopology::build_mesh(4, 4).unwrap();
        let f = FaultSet::bidirectional(&t, &[(5, 6), (9, 10), (1, 5)]).unwrap();
        let t = t.with_faults(&f);
        let o = run_reconfiguration(&t, NodeId(5), 0);
        for (v, vcs) in [
            (RoutingVariant::PureUd, 1),
            (RoutingVariant::HXy, 2),
            (RoutingVariant::HO1Turn, 3),
        ] {
            let rcfg = RoutingConfig::new(v, vcs).unwrap();
            let cdg = build_cdg(&t, &o.tables, rcfg);
            assert_eq!(check_acyclic(&cdg), Ok(()), "{v}");
            assert!(ud_layer_closed(&cdg, rcfg));
        }
    }

    #[test]
    fn dot_export_lists_edges() {
        let t = MeshTopology::build_mesh(2, 2).unwrap();
        let o = run_reconfiguration(&t, NodeId(0), 0);
        let cdg = build_cdg(&t, &o.tables, RoutingConfig::new(RoutingVariant::HXy, 2).unwrap());
        let dot = cdg.to_dot();
        assert!(dot.starts_with("digraph cdg {"));
        assert_eq!(dot.matches("->").count(), cdg.dependency_count());
    }
}
