//! Two-component mixture on standardised penguin bill measurements with an
//! injected outlier.

use std::path::Path;

use nalgebra::DVector;

use super::gmm::{analyse, PredictiveOutput};
use super::{derive_seed, outlier_vector, Timer};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::ingest::ingest_csv_limited;
use crate::output::TimingRow;

/// Column-wise z-scores.
pub fn standardise(rows: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mean = rows.iter().fold(DVector::zeros(dim), |acc, r| acc + r) / n;
    let mut sd = DVector::zeros(dim);
    for r in rows {
        sd += (r - &mean).map(|v| v * v);
    }
    let sd = sd.map(|v| {
        let s = (v / (n - 1.0).max(1.0)).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    rows.iter().map(|r| (r - &mean).component_div(&sd)).collect()
}

/// Standardised inliers, the data with the outlier appended, and the number
/// of rows dropped for missing values.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub inliers: Vec<DVector<f64>>,
    pub data: Vec<DVector<f64>>,
    pub skipped: usize,
}

/// Reads the first `cfg.rows` rows of `csv_path`, standardises the two
/// selected columns and appends an outlier at `outlier_factor` times the
/// largest absolute value of each coordinate.
pub fn prepare_data(csv_path: &Path, cfg: &ExperimentConfig) -> Result<PreparedData> {
    let raw = ingest_csv_limited(csv_path, &cfg.columns, Some(cfg.rows))?;
    log::info!(
        "{}: {} usable rows, {} skipped",
        csv_path.display(),
        raw.rows.len(),
        raw.skipped
    );
    let inliers = standardise(&raw.rows);
    let mut data = inliers.clone();
    if cfg.outlier_factor > 0.0 {
        data.push(outlier_vector(&inliers, cfg.outlier_factor));
    }
    Ok(PreparedData {
        inliers,
        data,
        skipped: raw.skipped,
    })
}

pub fn run_penguins(csv_path: &Path, cfg: &ExperimentConfig) -> Result<PredictiveOutput> {
    let PreparedData { inliers, data, .. } = prepare_data(csv_path, cfg)?;
    let mut check = cfg.clone();
    check.n = data.len();
    check.validate()?;
    let mut out = PredictiveOutput {
        rows: Vec::new(),
        regions: Vec::new(),
        timing: Vec::new(),
    };
    let mut timers = vec![Timer::default(); cfg.methods.len()];
    let datasets = vec![(inliers, data)];
    analyse(
        &check,
        &datasets,
        cfg.outlier_factor,
        derive_seed(cfg.seed, &[0]),
        &mut timers,
        &mut out,
    )?;
    out.timing = cfg
        .methods
        .iter()
        .zip(&timers)
        .map(|(m, t)| TimingRow {
            experiment: "penguins".into(),
            method: m.name().into(),
            seconds: t.seconds(),
        })
        .collect();
    Ok(out)
}
