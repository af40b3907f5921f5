//! Coverage of central credible intervals for a Gaussian mean when one
//! observation is replaced by a growing outlier.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use vmpost_core::median::{gaussian_geometric_median, DEFAULT_FIXED_POINT_ITERS};
use vmpost_core::variational::{isotropic_noise, powered_gaussian_posterior, svi_full_gaussian, SviOptions};
use vmpost_core::{make_partition, GaussianDist, SubsetPosteriorSet};

use super::{derive_seed, outlier_value, Timer};
use crate::config::{ExperimentConfig, GaussianFitter, Method};
use crate::error::Result;
use crate::output::{CoverageRow, TimingRow};

/// One simulated data set: `n - 1` inliers and, for a positive multiplier,
/// an outlier in the last slot.
pub fn simulate_data(cfg: &ExperimentConfig, multiplier: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(cfg.true_mean, cfg.noise_var.sqrt()).expect("validated variance");
    let mut data: Vec<f64> = (0..cfg.n).map(|_| normal.sample(&mut rng)).collect();
    if multiplier > 0.0 {
        let inliers = &data[..cfg.n - 1];
        data[cfg.n - 1] = outlier_value(inliers, multiplier);
    }
    data
}

fn fit(
    cfg: &ExperimentConfig,
    data: &[DVector<f64>],
    prior: &GaussianDist,
    noise: &DMatrix<f64>,
    power: usize,
    seed: u64,
) -> Result<GaussianDist> {
    Ok(match cfg.fitter {
        GaussianFitter::Conjugate => powered_gaussian_posterior(data, prior, noise, power)?,
        GaussianFitter::Svi => {
            let opts = SviOptions {
                steps: cfg.svi_steps,
                seed,
                ..SviOptions::default()
            };
            svi_full_gaussian(data, prior, noise, power, &opts)?
        }
    })
}

/// Posterior for `method` on one data set.
pub fn fit_method(cfg: &ExperimentConfig, method: Method, data: &[f64], seed: u64) -> Result<GaussianDist> {
    let points: Vec<DVector<f64>> = data.iter().map(|&x| DVector::from_element(1, x)).collect();
    let prior = GaussianDist::univariate(0.0, cfg.prior_var)?;
    let noise = isotropic_noise(1, cfg.noise_var);
    match method {
        Method::Vb => fit(cfg, &points, &prior, &noise, 1, seed),
        Method::Vm => {
            let plan = make_partition(points.len(), cfg.groups, seed)?;
            plan.validate()?;
            let groups = plan.split(&points)?;
            let posts = groups
                .iter()
                .enumerate()
                .map(|(j, g)| fit(cfg, g, &prior, &noise, cfg.groups, derive_seed(seed, &[j as u64])))
                .collect::<Result<Vec<_>>>()?;
            let seeds = (0..groups.len()).map(|j| derive_seed(seed, &[j as u64])).collect();
            let set = SubsetPosteriorSet::new(posts, plan.sizes(), seeds)?;
            Ok(gaussian_geometric_median(&set, DEFAULT_FIXED_POINT_ITERS, None)?.result)
        }
    }
}

/// Central credible interval of a univariate Gaussian.
pub fn central_interval(g: &GaussianDist, level: f64) -> (f64, f64) {
    let z = StdNormal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0);
    let sd = g.cov()[(0, 0)].sqrt();
    (g.mean()[0] - z * sd, g.mean()[0] + z * sd)
}

/// Coverage rows ordered by multiplier, then method, then level, together
/// with the time spent in each method.
pub fn run_gaussian_coverage(cfg: &ExperimentConfig) -> Result<(Vec<CoverageRow>, Vec<TimingRow>)> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut timers: Vec<Timer> = cfg.methods.iter().map(|_| Timer::default()).collect();
    for (mi, &multiplier) in cfg.multipliers.iter().enumerate() {
        for (k, &method) in cfg.methods.iter().enumerate() {
            let posts = timers[k].time(|| {
                (0..cfg.replications)
                    .into_par_iter()
                    .map(|rep| {
                        let data_seed = derive_seed(cfg.seed, &[mi as u64, rep as u64]);
                        let data = simulate_data(cfg, multiplier, data_seed);
                        fit_method(cfg, method, &data, derive_seed(data_seed, &[1 + k as u64]))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            for &level in &cfg.levels {
                let mut covered = 0usize;
                let mut width = 0.0;
                for post in &posts {
                    let (lo, hi) = central_interval(post, level);
                    if lo <= cfg.true_mean && cfg.true_mean <= hi {
                        covered += 1;
                    }
                    width += hi - lo;
                }
                rows.push(CoverageRow {
                    multiplier,
                    method: method.name().to_string(),
                    level,
                    coverage: covered as f64 / cfg.replications as f64,
                    replications: cfg.replications,
                    mean_width: width / cfg.replications as f64,
                });
            }
        }
    }
    let timing = cfg
        .methods
        .iter()
        .zip(&timers)
        .map(|(m, t)| TimingRow {
            experiment: "gaussian".into(),
            method: m.name().into(),
            seconds: t.seconds(),
        })
        .collect();
    Ok((rows, timing))
}
