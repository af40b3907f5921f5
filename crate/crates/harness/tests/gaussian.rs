use vmpost_harness::config::GaussianFitter;
use vmpost_harness::experiments::gaussian::{fit_method, run_gaussian_coverage, simulate_data};
use vmpost_harness::output::CoverageRow;
use vmpost_harness::{ExperimentConfig, ExperimentKind, Method};

fn config(multipliers: &[f64], methods: &[Method], replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        multipliers: multipliers.to_vec(),
        methods: methods.to_vec(),
        levels: vec![0.95],
        replications,
        ..ExperimentConfig::defaults(ExperimentKind::Gaussian)
    }
}

fn coverage(rows: &[CoverageRow], multiplier: f64, method: &str) -> f64 {
    rows.iter()
        .find(|r| r.multiplier == multiplier && r.method == method)
        .unwrap()
        .coverage
}

#[test]
fn plain_vb_is_calibrated_without_outlier() {
    let (rows, _) = run_gaussian_coverage(&config(&[0.0], &[Method::Vb], 50)).unwrap();
    let c = coverage(&rows, 0.0, "vb");
    assert!((c - 0.95).abs() <= 0.10, "coverage {c}");
}

#[test]
fn plain_vb_fails_under_a_large_outlier() {
    let (rows, _) = run_gaussian_coverage(&config(&[10.0], &[Method::Vb], 50)).unwrap();
    let c = coverage(&rows, 10.0, "vb");
    assert!(c <= 0.2, "coverage {c}");
}

/// The expected VM coverage at i=10 is close to 0.87, so the replication
/// count is chosen to put the Monte Carlo standard error near 0.008.
#[test]
fn vm_keeps_coverage_under_a_large_outlier() {
    let (rows, _) = run_gaussian_coverage(&config(&[10.0], &[Method::Vm], 2000)).unwrap();
    let c = coverage(&rows, 10.0, "vm");
    assert!(c >= 0.85, "coverage {c}");
}

#[test]
fn outlier_rule_scales_the_largest_magnitude() {
    let cfg = ExperimentConfig::defaults(ExperimentKind::Gaussian);
    let clean = simulate_data(&cfg, 0.0, 7);
    let dirty = simulate_data(&cfg, 3.0, 7);
    assert_eq!(clean[..99], dirty[..99]);
    let largest = clean[..99].iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert_eq!(dirty[99], 3.0 * largest);
}

#[test]
fn svi_fits_agree_with_conjugate_fits() {
    let conj = ExperimentConfig::defaults(ExperimentKind::Gaussian);
    let svi = ExperimentConfig {
        fitter: GaussianFitter::Svi,
        ..conj.clone()
    };
    for seed in 0..3u64 {
        let data = simulate_data(&conj, 5.0, seed);
        for method in [Method::Vb, Method::Vm] {
            let a = fit_method(&conj, method, &data, seed).unwrap();
            let b = fit_method(&svi, method, &data, seed).unwrap();
            assert!((a.mean()[0] - b.mean()[0]).abs() < 1e-2, "{method:?}");
            let (va, vb) = (a.cov()[(0, 0)], b.cov()[(0, 0)]);
            assert!((va - vb).abs() / va < 0.05, "{method:?}: {va} vs {vb}");
        }
    }
}

#[test]
fn rows_are_ordered_and_deterministic() {
    let cfg = ExperimentConfig {
        replications: 6,
        multipliers: vec![1.0, 2.0],
        ..ExperimentConfig::defaults(ExperimentKind::Gaussian)
    };
    let (a, _) = run_gaussian_coverage(&cfg).unwrap();
    let (b, _) = run_gaussian_coverage(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2 * 2 * 3);
    assert_eq!((a[0].multiplier, a[0].method.as_str(), a[0].level), (1.0, "vb", 0.8));
    assert_eq!((a[3].multiplier, a[3].method.as_str(), a[3].level), (1.0, "vm", 0.8));
}
