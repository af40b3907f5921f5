use std::fs;

use vmpost_harness::emit::{emit_coverage, emit_kl, emit_predictive};
use vmpost_harness::experiments::gaussian::run_gaussian_coverage;
use vmpost_harness::experiments::gmm::run_gmm_predictive;
use vmpost_harness::output::{write_csv, CoverageRow, KlRow, COVERAGE_HEADER};
use vmpost_harness::{ExperimentConfig, ExperimentKind, Method};

fn assert_xml(path: &std::path::Path) {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let labels: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("text"))
        .filter_map(|n| n.text())
        .collect();
    assert!(!labels.is_empty(), "{} has no axis labels", path.display());
}

#[test]
fn empty_rows_give_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_csv::<CoverageRow>(&path, &COVERAGE_HEADER, &[]).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "multiplier,method,level,coverage,replications,mean_width\n"
    );
    emit_kl(dir.path(), &[]).unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("kl.csv")).unwrap(),
        "outlier_len,method,mean_kl,replications\n"
    );
    assert_xml(&dir.path().join("kl.svg"));
}

#[test]
fn three_levels_by_fifteen_multipliers_give_45_lines() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Gaussian);
    cfg.methods = vec![Method::Vm];
    cfg.replications = 4;
    let (rows, _) = run_gaussian_coverage(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_coverage(dir.path(), "coverage", "Coverage", &rows).unwrap();
    let text = fs::read_to_string(dir.path().join("coverage.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "multiplier,method,level,coverage,replications,mean_width");
    assert_eq!(lines.len() - 1, 45);
    for row in &rows {
        let covered = row.coverage * row.replications as f64;
        assert!((0.0..=1.0).contains(&row.coverage));
        assert!((covered - covered.round()).abs() < 1e-9 && covered.round() <= row.replications as f64);
    }
    assert_xml(&dir.path().join("coverage.svg"));
}

#[test]
fn overwriting_is_idempotent_and_region_svgs_parse() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Gmm);
    cfg.multipliers = vec![0.0, 15.0];
    cfg.grid = 60;
    let out = run_gmm_predictive(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_predictive(dir.path(), "predictive", "Predictive", ("x1", "x2"), &out).unwrap();
    let first = fs::read(dir.path().join("predictive.csv")).unwrap();
    emit_predictive(dir.path(), "predictive", "Predictive", ("x1", "x2"), &out).unwrap();
    assert_eq!(first, fs::read(dir.path().join("predictive.csv")).unwrap());

    let mut svgs = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "svg") {
            assert_xml(&path);
            svgs += 1;
        }
    }
    // coverage plot plus one region plot per method and multiplier
    assert_eq!(svgs, 1 + 2 * 2);
    let grid = fs::read_to_string(dir.path().join("region_vm_x15.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "x,y,density,in_region");
    assert_eq!(grid.lines().count(), 1 + 60 * 60);
}

#[test]
fn kl_rows_round_trip_through_csv() {
    let rows = vec![KlRow {
        outlier_len: 0,
        method: "vb".into(),
        mean_kl: 0.25,
        replications: 3,
    }];
    let dir = tempfile::tempdir().unwrap();
    emit_kl(dir.path(), &rows).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("kl.csv")).unwrap();
    let back: Vec<KlRow> = reader.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, rows);
}
