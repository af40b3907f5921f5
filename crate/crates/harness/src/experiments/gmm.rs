//! Posterior-predictive regions of a two-dimensional Gaussian mixture under
//! a growing outlier.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vmpost_core::median::{covariance_rescale, gmm_median};
use vmpost_core::variational::{
    cavi_gmm, gmm_posterior_predictive, student_t_predictive, CaviOptions, GmmPrior, StudentTMixture,
};
use vmpost_core::{make_partition, GaussianDist, GaussianMixture, SubsetPosteriorSet};

use super::{derive_seed, outlier_vector, Timer};
use crate::config::{ExperimentConfig, Method};
use crate::error::Result;
use crate::output::{CoverageRow, TimingRow};
use crate::regions::{coverage, Bounds, DensityGrid, Region};

/// Inliers and the full data set (inliers plus any outlier).
pub type Dataset = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// A fitted predictive density.
#[derive(Debug, Clone)]
pub enum Predictive {
    StudentT(StudentTMixture),
    Gaussian(GaussianMixture),
}

impl Predictive {
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        let log = match self {
            Predictive::StudentT(t) => t.log_pdf(x),
            Predictive::Gaussian(g) => g.log_pdf(x),
        };
        log.map(f64::exp).unwrap_or(0.0)
    }
}

/// Predictive region of one method on one data set.
#[derive(Debug, Clone)]
pub struct RegionResult {
    pub multiplier: f64,
    pub method: Method,
    pub grid: DensityGrid,
    pub region: Region,
    /// Local density maxima above 1% of the peak, as `(x, y, density)`.
    pub peaks: Vec<(f64, f64, f64)>,
    /// Fraction of inliers inside the region.
    pub coverage: f64,
    pub inliers: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct PredictiveOutput {
    pub rows: Vec<CoverageRow>,
    /// Regions at `region_level` for the first replication of every
    /// multiplier.
    pub regions: Vec<RegionResult>,
    pub timing: Vec<TimingRow>,
}

fn cavi_options(cfg: &ExperimentConfig) -> CaviOptions {
    CaviOptions {
        max_iters: cfg.cavi_max_iters,
        tol: cfg.cavi_tol,
    }
}

/// Standard variational Bayes on all the data: the exact Student-t
/// predictive of the fitted mixture.
pub fn fit_vb(cfg: &ExperimentConfig, data: &[DVector<f64>], seed: u64) -> Result<StudentTMixture> {
    let prior = GmmPrior::weakly_informative(data)?;
    let state = cavi_gmm(data, cfg.components, &prior, 1, &cavi_options(cfg), seed)?;
    Ok(student_t_predictive(&state)?)
}

/// VM pipeline: partition, powered fit per group, moment-matched Gaussian
/// predictive per group, multi-marginal OT median; optionally rescaled.
pub fn fit_vm(cfg: &ExperimentConfig, data: &[DVector<f64>], seed: u64) -> Result<GaussianMixture> {
    let m = cfg.groups;
    let plan = make_partition(data.len(), m, seed)?;
    plan.validate()?;
    let groups = plan.split(data)?;
    let prior = GmmPrior::weakly_informative(data)?;
    let seeds: Vec<u64> = (0..m).map(|j| derive_seed(seed, &[j as u64])).collect();
    let predictives = groups
        .par_iter()
        .zip(&seeds)
        .map(|(g, &s)| {
            let state = cavi_gmm(g, cfg.components, &prior, m, &cavi_options(cfg), s)?;
            Ok(gmm_posterior_predictive(&state, true)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = SubsetPosteriorSet::new(predictives, plan.sizes(), seeds)?;
    let median = gmm_median(&set)?.report.result;
    Ok(if cfg.rescale {
        covariance_rescale(&median, m)?
    } else {
        median
    })
}

pub fn fit_predictive(cfg: &ExperimentConfig, method: Method, data: &[DVector<f64>], seed: u64) -> Result<Predictive> {
    Ok(match method {
        Method::Vb => Predictive::StudentT(fit_vb(cfg, data, seed)?),
        Method::Vm => Predictive::Gaussian(fit_vm(cfg, data, seed)?),
    })
}

/// Inliers from the equal-weight mixture of `N((mu_k, mu_k), I)` and the
/// full data set, whose last slot holds the outlier when `multiplier > 0`.
pub fn simulate_data(cfg: &ExperimentConfig, multiplier: f64, seed: u64) -> Result<Dataset> {
    let k = cfg.cluster_means.len();
    let components = cfg
        .cluster_means
        .iter()
        .map(|&mu| GaussianDist::new(DVector::from_element(2, mu), DMatrix::identity(2, 2)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mixture = GaussianMixture::new(vec![1.0 / k as f64; k], components)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut data, _) = mixture.sample_labeled_with(cfg.n, &mut rng)?;
    if multiplier > 0.0 {
        let outlier = outlier_vector(&data[..cfg.n - 1], multiplier);
        data[cfg.n - 1] = outlier;
        Ok((data[..cfg.n - 1].to_vec(), data))
    } else {
        Ok((data.clone(), data))
    }
}

/// Grid, region and inlier coverage of a fitted predictive.
pub fn evaluate_region(
    cfg: &ExperimentConfig,
    predictive: &Predictive,
    inliers: &[DVector<f64>],
    level: f64,
) -> (DensityGrid, Region, f64) {
    let bounds = Bounds::around(inliers, 3.0);
    let grid = DensityGrid::evaluate(bounds, cfg.grid, |x| predictive.density(x));
    let region = grid.hdr(level);
    let cov = coverage(&region, inliers, |x| predictive.density(x));
    (grid, region, cov)
}

/// Runs every method on `(inliers, data)` and appends rows and regions.
pub(crate) fn analyse(
    cfg: &ExperimentConfig,
    datasets: &[Dataset],
    multiplier: f64,
    seed: u64,
    timers: &mut [Timer],
    out: &mut PredictiveOutput,
) -> Result<()> {
    for (k, &method) in cfg.methods.iter().enumerate() {
        let fits = timers[k].time(|| {
            datasets
                .par_iter()
                .enumerate()
                .map(|(rep, (_, data))| {
                    fit_predictive(cfg, method, data, derive_seed(seed, &[rep as u64, 1 + k as u64]))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for &level in &cfg.levels {
            let mut cov = 0.0;
            let mut area = 0.0;
            for (fit, (inliers, _)) in fits.iter().zip(datasets) {
                let (_, region, c) = evaluate_region(cfg, fit, inliers, level);
                cov += c;
                area += region.area;
            }
            let reps = datasets.len() as f64;
            out.rows.push(CoverageRow {
                multiplier,
                method: method.name().to_string(),
                level,
                coverage: cov / reps,
                replications: datasets.len(),
                mean_width: area / reps,
            });
        }
        let inliers = &datasets[0].0;
        let (grid, region, cov) = evaluate_region(cfg, &fits[0], inliers, cfg.region_level);
        out.regions.push(RegionResult {
            multiplier,
            method,
            peaks: grid.local_maxima(0.01),
            grid,
            region,
            coverage: cov,
            inliers: inliers.clone(),
        });
    }
    Ok(())
}

pub fn run_gmm_predictive(cfg: &ExperimentConfig) -> Result<PredictiveOutput> {
    cfg.validate()?;
    let mut out = PredictiveOutput {
        rows: Vec::new(),
        regions: Vec::new(),
        timing: Vec::new(),
    };
    let mut timers = vec![Timer::default(); cfg.methods.len()];
    for (mi, &multiplier) in cfg.multipliers.iter().enumerate() {
        let datasets = (0..cfg.replications)
            .map(|rep| simulate_data(cfg, multiplier, derive_seed(cfg.seed, &[mi as u64, rep as u64])))
            .collect::<Result<Vec<_>>>()?;
        analyse(
            cfg,
            &datasets,
            multiplier,
            derive_seed(cfg.seed, &[mi as u64, u64::MAX]),
            &mut timers,
            &mut out,
        )?;
    }
    out.timing = cfg
        .methods
        .iter()
        .zip(&timers)
        .map(|(m, t)| TimingRow {
            experiment: "gmm".into(),
            method: m.name().into(),
            seconds: t.seconds(),
        })
        .collect();
    Ok(out)
}
