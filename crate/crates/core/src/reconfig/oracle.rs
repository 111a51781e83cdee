//! Offline reference for Up*/Down* marking and routing tables.
//!
//! Independent of the flag engine: the spanning tree is a plain BFS from each
//! partition's first scheduled root, and table entries come from a backward
//! shortest-legal-path DP in the packet direction.

use std::collections::VecDeque;

use crate::reconfig::{PortMark, RoutingTable};
use crate::topology::{connected_components, DirSet, Direction, MeshTopology, NodeId};

#[derive(Clone, Debug)]
pub struct OracleRoutes {
    pub tables: Vec<RoutingTable>,
    pub marks: Vec<[PortMark; 4]>,
    /// BFS depth from the node's partition root.
    pub depth: Vec<usize>,
    pub partition_root: Vec<NodeId>,
}

/// True if moving `from → to` heads toward the partition root. Equal depths
/// never occur on a mesh (it is bipartite), but would resolve to the lower id.
fn is_up_hop(depth: &[usize], from: NodeId, to: NodeId) -> bool {
    match depth[to.0].cmp(&depth[from.0]) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => to.0 < from.0,
    }
}

pub fn oracle_ud_routes(topo: &MeshTopology, first_root: NodeId) -> OracleRoutes {
    let n = topo.node_count();
    let comps = connected_components(topo);

    // Each partition is marked by its first root in schedule order.
    let mut partition_root = vec![NodeId(usize::MAX); n];
    for k in 0..n {
        let r = NodeId((first_root.0 + k) % n);
        let label = comps[r.0];
        for v in topo.nodes() {
            if comps[v.0] == label && partition_root[v.0].0 == usize::MAX {
                partition_root[v.0] = r;
            }
        }
    }

    let mut depth = vec![usize::MAX; n];
    for v in topo.nodes() {
        let r = partition_root[v.0];
        if r != v || depth[r.0] != usize::MAX {
            continue;
        }
        depth[r.0] = 0;
        let mut q = VecDeque::from([r]);
        while let Some(u) = q.pop_front() {
            for d in Direction::ALL {
                if !topo.bidir_healthy(u, d) {
                    continue;
                }
                let w = topo.neighbor(u, d).unwrap();
                if depth[w.0] == usize::MAX {
                    depth[w.0] = depth[u.0] + 1;
                    q.push_back(w);
                }
            }
        }
    }

    let mut marks = vec![[PortMark::Unmarked; 4]; n];
    for v in topo.nodes() {
        for d in Direction::ALL {
            if topo.bidir_healthy(v, d) {
                let w = topo.neighbor(v, d).unwrap();
                marks[v.0][d.index()] = if is_up_hop(&depth, v, w) {
                    PortMark::Up
                } else {
                    PortMark::Down
                };
            }
        }
    }

    // g[state][x]: shortest legal remaining hops from x to dst; state 0 may
    // still climb, state 1 has taken a down hop.
    let mut tables: Vec<RoutingTable> = (0..n)
        .map(|_| RoutingTable {
            entries: vec![DirSet::EMPTY; n],
            valid: true,
        })
        .collect();
    for dst in topo.nodes() {
        let mut g = [vec![usize::MAX; n], vec![usize::MAX; n]];
        g[0][dst.0] = 0;
        g[1][dst.0] = 0;
        let mut q = VecDeque::from([(dst, 0usize), (dst, 1usize)]);
        while let Some((y, sy)) = q.pop_front() {
            let gy = g[sy][y.0];
            // predecessors x with a hop x -> y leading into state sy
            for d in Direction::ALL {
                if !topo.bidir_healthy(y, d) {
                    continue;
                }
                let x = topo.neighbor(y, d).unwrap();
                let up = is_up_hop(&depth, x, y);
                let sources: &[usize] = match (up, sy) {
                    (true, 0) => &[0],
                    (true, _) => &[],
                    (false, 1) => &[0, 1],
                    (false, _) => &[],
                };
                for &sx in sources {
                    if g[sx][x.0] == usize::MAX {
                        g[sx][x.0] = gy + 1;
                        q.push_back((x, sx));
                    }
                }
            }
        }
        for x in topo.nodes() {
            if x == dst || g[0][x.0] == usize::MAX {
                continue;
            }
            let mut entry = DirSet::EMPTY;
            for d in Direction::ALL {
                if !topo.bidir_healthy(x, d) {
                    continue;
                }
                let y = topo.neighbor(x, d).unwrap();
                let next = if is_up_hop(&depth, x, y) { 0 } else { 1 };
                if g[next][y.0] != usize::MAX && g[next][y.0] + 1 == g[0][x.0] {
                    entry.insert(d);
                }
            }
            tables[x.0].entries[dst.0] = entry;
        }
    }

    OracleRoutes {
        tables,
        marks,
        depth,
        partition_root,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_free_3x3_bfs_layout() {
        let t = MeshTopology::build_mesh(3, 3).unwrap();
        let o = oracle_ud_routes(&t, NodeId(0));
        assert_eq!(o.depth, vec![0, 1, 2, 1, 2, 3, 2, 3, 4]);
        // full scan reaches the far corner after 4 hops
        assert_eq!(o.depth.iter().max(), Some(&4));
    }

    #[test]
    fn single_node() {
        let t = MeshTopology::build_mesh(1, 1).unwrap();
        let o = oracle_ud_routes(&t, NodeId(0));
        assert_eq!(o.tables[0].entries, vec![DirSet::EMPTY]);
    }

    #[test]
    fn routes_toward_root_climb() {
        let t = MeshTopology::build_mesh(3, 3).unwrap();
        let o = oracle_ud_routes(&t, NodeId(0));
        // from the far corner to the root, both up-links are shortest
        assert_eq!(o.tables[8].entry(NodeId(0)).to_string(), "NW");
        assert_eq!(o.marks[8][Direction::North.index()], PortMark::Up);
    }
}
