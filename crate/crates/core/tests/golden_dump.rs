use hermes_noc::reconfig::run_reconfiguration;
use hermes_noc::topology::{FaultSet, MeshTopology, NodeId};

const GOLDEN: &str = include_str!("golden/split3x3_reconfig.txt");

/// 3x3 mesh with the right column cut off: faults 1-2, 4-5, 7-8, initiated by
/// node 1.
fn column_split_report() -> String {
    let mesh = MeshTopology::build_mesh(3, 3).unwrap();
    let faults = FaultSet::bidirectional(&mesh, &[(1, 2), (4, 5), (7, 8)]).unwrap();
    let topo = mesh.with_faults(&faults);
    run_reconfiguration(&topo, NodeId(1), 0).report(&topo)
}

#[test]
fn column_split_matches_golden_dump() {
    let got = column_split_report();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let p = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/split3x3_reconfig.txt");
        std::fs::write(p, &got).unwrap();
        return;
    }
    assert_eq!(got, GOLDEN);
}
