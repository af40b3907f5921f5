//! Writes an experiment's tables and figures into an output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::experiments::gmm::{PredictiveOutput, RegionResult};
use crate::output::{
    line_plot, region_plot, write_csv, write_region_csv, CoverageRow, KlRow, Series, TimingRow, COVERAGE_HEADER,
    KL_HEADER, TIMING_HEADER,
};

fn series_by<T>(rows: &[T], key: impl Fn(&T) -> String, point: impl Fn(&T) -> (f64, f64)) -> Vec<Series> {
    let mut map: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        map.entry(key(r)).or_default().push(point(r));
    }
    map.into_iter()
        .map(|(label, points)| Series { label, points })
        .collect()
}

/// `<stem>.csv` plus a coverage-versus-multiplier plot `<stem>.svg`.
pub fn emit_coverage(outdir: &Path, stem: &str, title: &str, rows: &[CoverageRow]) -> Result<()> {
    write_csv(&outdir.join(format!("{stem}.csv")), &COVERAGE_HEADER, rows)?;
    let series = series_by(
        rows,
        |r| format!("{} @ {}", r.method, r.level),
        |r| (r.multiplier, r.coverage),
    );
    line_plot(
        &outdir.join(format!("{stem}.svg")),
        title,
        "outlier multiplier",
        "coverage",
        &series,
    )
}

pub fn emit_kl(outdir: &Path, rows: &[KlRow]) -> Result<()> {
    write_csv(&outdir.join("kl.csv"), &KL_HEADER, rows)?;
    let series = series_by(rows, |r| r.method.clone(), |r| (r.outlier_len as f64, r.mean_kl));
    line_plot(
        &outdir.join("kl.svg"),
        "Mean topic KL divergence",
        "outlier document length",
        "mean KL",
        &series,
    )
}

pub fn emit_timing(outdir: &Path, rows: &[TimingRow]) -> Result<()> {
    write_csv(&outdir.join("timing.csv"), &TIMING_HEADER, rows)
}

fn region_stem(r: &RegionResult) -> String {
    format!("region_{}_x{}", r.method.name(), r.multiplier)
}

/// Region figures for every stored region, and full grid dumps for the
/// smallest and largest multipliers.
pub fn emit_regions(outdir: &Path, labels: (&str, &str), regions: &[RegionResult]) -> Result<()> {
    fs::create_dir_all(outdir)?;
    let lo = regions.iter().map(|r| r.multiplier).fold(f64::INFINITY, f64::min);
    let hi = regions.iter().map(|r| r.multiplier).fold(f64::NEG_INFINITY, f64::max);
    for r in regions {
        let stem = region_stem(r);
        let title = format!(
            "{} predictive, {:.0}% region, multiplier {} ({} peaks)",
            r.method.name(),
            100.0 * r.region.level,
            r.multiplier,
            r.peaks.len()
        );
        region_plot(
            &outdir.join(format!("{stem}.svg")),
            &title,
            labels,
            &r.grid,
            &r.region,
            &r.inliers,
        )?;
        if r.multiplier == lo || r.multiplier == hi {
            write_region_csv(&outdir.join(format!("{stem}.csv")), &r.grid, &r.region)?;
        }
    }
    Ok(())
}

pub fn emit_predictive(
    outdir: &Path,
    stem: &str,
    title: &str,
    labels: (&str, &str),
    out: &PredictiveOutput,
) -> Result<()> {
    emit_coverage(outdir, stem, title, &out.rows)?;
    emit_regions(outdir, labels, &out.regions)?;
    emit_timing(outdir, &out.timing)
}
