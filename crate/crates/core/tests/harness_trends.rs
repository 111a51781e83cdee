use hermes_noc::harness::{
    dynamic_fault_experiment, mean_min_hops, run_point, saturation_for_seed, zero_load_latency,
    DynamicConfig, ExperimentConfig,
};
use hermes_noc::routing::RoutingVariant;
use hermes_noc::simcore::zero_load_formula;
use hermes_noc::topology::MeshTopology;
use hermes_noc::traffic::TrafficPattern;

fn base(variant: RoutingVariant, vcs: usize, faults: usize) -> ExperimentConfig {
    ExperimentConfig {
        variant,
        vcs,
        fault_count: faults,
        warmup: 2000,
        measure: 8000,
        seeds: (0..4).collect(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_load_latency_grows_with_faults() {
    let free = zero_load_latency(&base(RoutingVariant::HXy, 2, 0)).unwrap();
    let one = zero_load_latency(&base(RoutingVariant::HXy, 2, 1)).unwrap();
    let heavy = zero_load_latency(&base(RoutingVariant::HXy, 2, 27)).unwrap();
    assert!(free < one, "{free} {one}");
    assert!(one <= heavy, "{one} {heavy}");
}

#[test]
fn escape_only_routing_is_no_faster_at_zero_load() {
    // per-topology path lengths vary, so average over more fault draws
    let wide = |variant| ExperimentConfig {
        measure: 4000,
        seeds: (0..12).collect(),
        ..base(variant, 2, 1)
    };
    let hxy = zero_load_latency(&wide(RoutingVariant::HXy)).unwrap();
    let ud = zero_load_latency(&wide(RoutingVariant::PureUd)).unwrap();
    assert!(ud >= hxy, "{ud} {hxy}");
}

#[test]
fn two_node_mesh_hits_the_closed_form() {
    let cfg = ExperimentConfig {
        kx: 2,
        ky: 1,
        warmup: 0,
        measure: 20_000,
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    // two nodes at this rate almost never contend
    let m = run_point(&cfg, 0.001, 0).unwrap();
    assert!(m.packets > 0);
    assert_eq!(m.avg_latency, zero_load_formula(1, 6) as f64);
}

fn sat(cfg: &ExperimentConfig) -> f64 {
    let mut v: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&s| saturation_for_seed(cfg, s).unwrap().saturation)
        .collect();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn transpose_saturates_earlier_and_o1turn_balances_it() {
    let mut uni = base(RoutingVariant::HXy, 2, 0);
    uni.seeds = vec![0, 1, 2];
    uni.measure = 5000;
    let mut tr = uni.clone();
    tr.pattern = TrafficPattern::Transpose;
    let mut o1 = tr.clone();
    o1.variant = RoutingVariant::HO1Turn;
    o1.vcs = 3;
    let (su, st, so) = (sat(&uni), sat(&tr), sat(&o1));
    assert!(st < su, "transpose {st} uniform {su}");
    assert!(so >= st, "o1turn {so} xy {st}");
}

#[test]
fn saturation_search_is_reproducible() {
    let mut cfg = base(RoutingVariant::HO1Turn, 3, 12);
    cfg.measure = 3000;
    let a = saturation_for_seed(&cfg, 5).unwrap();
    let b = saturation_for_seed(&cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.probes.len(), 8);
    // the bisection grid is 1/256, finer than 0.005
    assert_eq!((a.saturation * 256.0).fract(), 0.0);
}

#[test]
fn mean_hop_counts() {
    let t = MeshTopology::build_mesh(8, 8).unwrap();
    // per axis E|x1 − x2| = (k² − 1)/(3k) over all pairs; drop the N self pairs
    let uniform = 2.0 * 63.0 / 24.0 * 64.0 / 63.0;
    assert!((mean_min_hops(&t, &TrafficPattern::UniformRandom) - uniform).abs() < 1e-9);
    // off-diagonal nodes travel 2|x − y|: 4·Σ d(8 − d) / 56
    assert!((mean_min_hops(&t, &TrafficPattern::Transpose) - 6.0).abs() < 1e-9);
}

#[test]
fn small_dynamic_run_freezes_for_one_epoch() {
    let cfg = ExperimentConfig {
        kx: 4,
        ky: 4,
        variant: RoutingVariant::HO1Turn,
        vcs: 3,
        ..ExperimentConfig::default()
    };
    let mut d = DynamicConfig::new(cfg, 0.1, 3);
    d.fault_count = 6;
    d.fault_cycle = 3000;
    d.total_cycles = 10_000;
    d.bin = 500;
    let r = dynamic_fault_experiment(&d).unwrap();
    assert_eq!(r.scheduled_resume, 3000 + 256);
    assert_eq!(r.observed_resume, Some(3256));
    assert_eq!(r.frozen_flit_moves, 0);
    assert_eq!(r.bins.len(), 20);
}
