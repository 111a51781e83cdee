use hermes_noc::routing::{RoutingConfig, RoutingVariant};
use hermes_noc::simcore::{Network, NetworkConfig};
use hermes_noc::topology::{inject_random_faults, MeshTopology, NodeId};
use hermes_noc::traffic::{SyntheticSource, TrafficConfig, TrafficPattern};

#[test]
fn latency_never_beats_the_pipeline_bound() {
    let mesh = MeshTopology::build_mesh(6, 6).unwrap();
    for (seed, variant, vcs) in [
        (1, RoutingVariant::HXy, 2),
        (2, RoutingVariant::HO1Turn, 3),
        (3, RoutingVariant::PureUd, 2),
    ] {
        let faults = inject_random_faults(&mesh, 10, seed, true).unwrap();
        let mut cfg = NetworkConfig::new(6, 6, RoutingConfig::new(variant, vcs).unwrap());
        cfg.seed = seed;
        let mut net = Network::new(cfg, &faults).unwrap();
        let tcfg = TrafficConfig::new(TrafficPattern::UniformRandom, 0.15, seed).unwrap();
        let mut src = SyntheticSource::new(&tcfg, 36);
        let mut seen = 0;
        for t in 0..6000u64 {
            for node in mesh.nodes() {
                if let Some(p) = src.generate(&mesh, node, t) {
                    net.inject(p.src, p.dst, p.size, t);
                }
            }
            net.step();
            for e in net.take_ejections() {
                let h = mesh.manhattan(NodeId(e.src as usize), NodeId(e.dst as usize)) as u64;
                assert!(e.latency() >= 5 * h + (e.size as u64 - 1), "{e:?}");
                assert!(e.hops as u64 >= h);
                seen += 1;
            }
        }
        assert!(seen > 1000);
        assert_eq!(net.stats().dropped_packets, 0);
        net.watchdog_check().unwrap();
    }
}
