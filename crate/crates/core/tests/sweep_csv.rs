use hermes_noc::harness::{sweep_and_emit, ExperimentConfig, CSV_HEADER};
use hermes_noc::routing::RoutingVariant;
use hermes_noc::topology::FaultPlacement;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        kx: 4,
        ky: 4,
        variant: RoutingVariant::HO1Turn,
        vcs: 3,
        fault_count: 5,
        placement: FaultPlacement::Hotspot,
        warmup: 500,
        measure: 2000,
        drain: 5000,
        seeds: vec![2, 0, 1],
        rates: vec![0.2, 0.05],
        ..ExperimentConfig::default()
    }
}

#[test]
fn header_rows_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let rows = sweep_and_emit(&small(), &out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len() - 1, 2 * 3 + 2);
    assert_eq!(rows.len(), 8);
    let keys: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(&f[..5], &["h-o1turn", "3", "5", "hotspot", "uniform"]);
            (f[5].to_string(), f[6].to_string())
        })
        .collect();
    let want: Vec<(String, String)> = [
        ("0.05", "0"),
        ("0.05", "1"),
        ("0.05", "2"),
        ("0.05", "mean"),
        ("0.2", "0"),
        ("0.2", "1"),
        ("0.2", "2"),
        ("0.2", "mean"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    assert_eq!(keys, want);
    for chunk in rows.chunks(4) {
        let mean = chunk[..3].iter().map(|r| r.avg_latency).sum::<f64>() / 3.0;
        assert_eq!(chunk[3].avg_latency, mean);
        let thr = chunk[..3].iter().map(|r| r.throughput).sum::<f64>() / 3.0;
        assert_eq!(chunk[3].throughput, thr);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    sweep_and_emit(&small(), &a).unwrap();
    sweep_and_emit(&small(), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn unwritable_path_is_an_io_error() {
    let mut cfg = small();
    cfg.seeds = vec![0];
    cfg.rates = vec![0.05];
    let err = sweep_and_emit(&cfg, std::path::Path::new("/nonexistent/dir/r.csv")).unwrap_err();
    assert!(matches!(err, hermes_noc::Error::Io(_)), "{err}");
}
