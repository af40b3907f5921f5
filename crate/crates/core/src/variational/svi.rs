//! Stochastic variational inference for a full-covariance Gaussian family.
//!
//! `q(theta) = N(mu, L L^T)` with `L` lower triangular; the diagonal of `L`
//! is stored on the log scale so `L L^T` stays positive definite. Gradients
//! use the reparameterisation `theta = mu + L eps` with antithetic pairs
//! `(eps, -eps)`, and the parameters are updated with Adam. The returned
//! posterior is the Polyak average of the iterates over the second half of
//! the run.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::GaussianDist;
use crate::error::{Error, Result};
use crate::linalg;

/// A differentiable unnormalised log joint `log p(X, theta)`.
pub trait LogJoint {
    fn dim(&self) -> usize;
    fn log_joint(&self, theta: &DVector<f64>) -> f64;
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;
}

/// Gaussian mean with known noise covariance, Gaussian prior, and the group
/// likelihood raised to `power`.
#[derive(Debug, Clone)]
pub struct GaussianMeanModel {
    count: f64,
    sum: DVector<f64>,
    /// `sum_i x_i^T P x_i` with `P` the noise precision.
    quad: f64,
    noise_prec: DMatrix<f64>,
    noise_log_det: f64,
    prior_mean: DVector<f64>,
    prior_prec: DMatrix<f64>,
    prior_log_det: f64,
    power: f64,
}

impl GaussianMeanModel {
    pub fn new(data: &[DVector<f64>], prior: &GaussianDist, noise_cov: &DMatrix<f64>, power: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyGroup);
        }
        if power == 0 {
            return Err(Error::InvalidArgument("power must be at least 1".into()));
        }
        let dim = prior.dim();
        if let Some(x) = data.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        let noise_prec = linalg::inverse_pd(noise_cov).map_err(|_| Error::SingularCovariance)?;
        let prior_prec = linalg::inverse_pd(prior.cov()).map_err(|_| Error::SingularCovariance)?;
        let sum = data.iter().fold(DVector::zeros(dim), |acc, x| acc + x);
        let quad = data.iter().map(|x| x.dot(&(&noise_prec * x))).sum();
        Ok(Self {
            count: data.len() as f64,
            sum,
            quad,
            noise_log_det: linalg::log_det_pd(noise_cov)?,
            noise_prec,
            prior_mean: prior.mean().clone(),
            prior_log_det: linalg::log_det_pd(prior.cov())?,
            prior_prec,
            power: power as f64,
        })
    }
}

impl LogJoint for GaussianMeanModel {
    fn dim(&self) -> usize {
        self.sum.len()
    }

    fn log_joint(&self, theta: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let p_theta = &self.noise_prec * theta;
        let sq = self.quad - 2.0 * self.sum.dot(&p_theta) + self.count * theta.dot(&p_theta);
        let lik = -0.5 * (self.count * (d * (2.0 * PI).ln() + self.noise_log_det) + sq);
        let diff = theta - &self.prior_mean;
        let prior = -0.5 * (d * (2.0 * PI).ln() + self.prior_log_det + diff.dot(&(&self.prior_prec * &diff)));
        self.power * lik + prior
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let lik = &self.noise_prec * (&self.sum - theta * self.count);
        lik * self.power - &self.prior_prec * (theta - &self.prior_mean)
    }
}

/// Mean, log-diagonal and strictly-lower entries of the Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVariationalParams {
    pub mean: DVector<f64>,
    pub log_diag: DVector<f64>,
    /// Row-major strictly lower triangle.
    pub lower: Vec<f64>,
}

impl GaussianVariationalParams {
    pub fn from_gaussian(g: &GaussianDist) -> Result<Self> {
        let l = linalg::cholesky(g.cov())?;
        let d = g.dim();
        let mut lower = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in 0..i {
                lower.push(l[(i, j)]);
            }
        }
        Ok(Self {
            mean: g.mean().clone(),
            log_diag: l.diagonal().map(f64::ln),
            lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn chol(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut l = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            l[(i, i)] = self.log_diag[i].exp();
            for j in 0..i {
                l[(i, j)] = self.lower[k];
                k += 1;
            }
        }
        l
    }

    pub fn to_gaussian(&self) -> Result<GaussianDist> {
        let l = self.chol();
        GaussianDist::new(self.mean.clone(), linalg::symmetrize(&(&l * l.transpose())))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mean
            .iter()
            .chain(self.log_diag.iter())
            .chain(self.lower.iter())
            .cloned()
            .collect()
    }

    pub fn unflatten(dim: usize, flat: &[f64]) -> Self {
        Self {
            mean: DVector::from_column_slice(&flat[..dim]),
            log_diag: DVector::from_column_slice(&flat[dim..2 * dim]),
            lower: flat[2 * dim..].to_vec(),
        }
    }
}

fn entropy(params: &GaussianVariationalParams) -> f64 {
    let d = params.dim() as f64;
    0.5 * d * (1.0 + (2.0 * PI).ln()) + params.log_diag.sum()
}

/// Reparameterised ELBO estimate over the fixed draws `eps` (each used with
/// its antithetic partner).
pub fn elbo_estimate<M: LogJoint>(model: &M, params: &GaussianVariationalParams, eps: &[DVector<f64>]) -> f64 {
    let l = params.chol();
    let mut total = 0.0;
    for e in eps {
        let step = &l * e;
        total += model.log_joint(&(&params.mean + &step));
        total += model.log_joint(&(&params.mean - &step));
    }
    total / (2 * eps.len()) as f64 + entropy(params)
}

/// Exact gradient of [`elbo_estimate`] with respect to the flattened
/// parameters.
pub fn elbo_gradient<M: LogJoint>(
    model: &M,
    params: &GaussianVariationalParams,
    eps: &[DVector<f64>],
) -> GaussianVariationalParams {
    let d = params.dim();
    let l = params.chol();
    let mut g_mean = DVector::zeros(d);
    let mut g_l = DMatrix::zeros(d, d);
    for e in eps {
        let step = &l * e;
        for (theta, sign) in [(&params.mean + &step, 1.0), (&params.mean - &step, -1.0)] {
            let g = model.gradient(&theta);
            g_l += &g * e.transpose() * sign;
            g_mean += g;
        }
    }
    let n = (2 * eps.len()) as f64;
    g_mean /= n;
    g_l /= n;
    let mut log_diag = DVector::zeros(d);
    let mut lower = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        log_diag[i] = g_l[(i, i)] * l[(i, i)] + 1.0;
        for j in 0..i {
            lower.push(g_l[(i, j)]);
        }
    }
    GaussianVariationalParams {
        mean: g_mean,
        log_diag,
        lower,
    }
}

/// Learning-rate schedule for the Adam steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `scale * (1 + t / delay)^(-exponent)`.
    RobbinsMonro {
        scale: f64,
        delay: f64,
        exponent: f64,
    },
}

impl StepSchedule {
    pub fn rate(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(r) => r,
            StepSchedule::RobbinsMonro { scale, delay, exponent } => scale * (1.0 + t as f64 / delay).powf(-exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviOptions {
    pub steps: usize,
    pub schedule: StepSchedule,
    /// Base draws per step; each is used together with its negation.
    pub mc_samples: usize,
    pub seed: u64,
    /// Steps between ELBO checkpoints.
    pub checkpoint_every: usize,
    /// Draws used for the checkpoint ELBO estimates.
    pub checkpoint_samples: usize,
}

impl Default for SviOptions {
    fn default() -> Self {
        Self {
            steps: 4000,
            schedule: StepSchedule::RobbinsMonro {
                scale: 0.1,
                delay: 100.0,
                exponent: 0.6,
            },
            mc_samples: 8,
            seed: 0,
            checkpoint_every: 20,
            checkpoint_samples: 64,
        }
    }
}

/// Checkpoint ELBO estimates recorded during a run.
#[derive(Debug, Clone, Default)]
pub struct SviTrace {
    pub steps: Vec<usize>,
    pub elbo: Vec<f64>,
}

const DIVERGENCE_WINDOW: usize = 100;

fn standard_normals(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(dim, |_, _| StandardNormal.sample(rng)))
        .collect()
}

/// Maximises the reparameterised ELBO from `init`.
pub fn fit_gaussian_svi<M: LogJoint>(
    model: &M,
    init: &GaussianVariationalParams,
    options: &SviOptions,
) -> Result<(GaussianDist, SviTrace)> {
    if options.mc_samples == 0 || options.steps == 0 {
        return Err(Error::InvalidArgument("steps and mc_samples must be positive".into()));
    }
    let dim = model.dim();
    if init.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: init.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let eval_eps = standard_normals(dim, options.checkpoint_samples.max(1), &mut rng);

    let mut theta = init.flatten();
    let n = theta.len();
    let (beta1, beta2, adam_eps) = (0.9, 0.99, 1e-8);
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    let average_from = options.steps / 2;
    let mut average = vec![0.0; n];
    let mut averaged = 0usize;
    let mut trace = SviTrace::default();
    let mut decreases = 0usize;

    for t in 0..options.steps {
        let params = GaussianVariationalParams::unflatten(dim, &theta);
        let eps = standard_normals(dim, options.mc_samples, &mut rng);
        let grad = elbo_gradient(model, &params, &eps).flatten();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step: t });
        }
        let rate = options.schedule.rate(t);
        let c1 = 1.0 - beta_pow(beta1, t + 1);
        let c2 = 1.0 - beta_pow(beta2, t + 1);
        for i in 0..n {
            first[i] = beta1 * first[i] + (1.0 - beta1) * grad[i];
            second[i] = beta2 * second[i] + (1.0 - beta2) * grad[i] * grad[i];
            // ascent
            theta[i] += rate * (first[i] / c1) / ((second[i] / c2).sqrt() + adam_eps);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t });
        }
        if t >= average_from {
            averaged += 1;
            for (a, v) in average.iter_mut().zip(&theta) {
                *a += (v - *a) / averaged as f64;
            }
        }
        if options.checkpoint_every > 0 && (t + 1) % options.checkpoint_every == 0 {
            let value = elbo_estimate(model, &GaussianVariationalParams::unflatten(dim, &theta), &eval_eps);
            if let Some(&last) = trace.elbo.last() {
                decreases = if value < last { decreases + 1 } else { 0 };
                if decreases >= DIVERGENCE_WINDOW {
                    return Err(Error::Diverged { step: t });
                }
            }
            trace.steps.push(t + 1);
            trace.elbo.push(value);
        }
    }
    let result = GaussianVariationalParams::unflatten(dim, &average).to_gaussian()?;
    Ok((result, trace))
}

fn beta_pow(beta: f64, t: usize) -> f64 {
    beta.powi(t.min(i32::MAX as usize) as i32)
}

/// SVI for the powered Gaussian-mean model, initialised at the prior.
pub fn svi_full_gaussian(
    data: &[DVector<f64>],
    prior: &GaussianDist,
    noise_cov: &DMatrix<f64>,
    power: usize,
    options: &SviOptions,
) -> Result<GaussianDist> {
    let model = GaussianMeanModel::new(data, prior, noise_cov, power)?;
    let init = GaussianVariationalParams::from_gaussian(prior)?;
    fit_gaussian_svi(&model, &init, options).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::{isotropic_noise, powered_gaussian_posterior};

    fn draws(mean: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
        GaussianDist::univariate(mean, 1.0)
            .unwrap()
            .sample(count, seed)
            .unwrap()
    }

    #[test]
    fn matches_conjugate_posterior_in_one_dimension() {
        let data = draws(2.0, 200, 1);
        let prior = GaussianDist::univariate(0.0, 100.0).unwrap();
        let noise = isotropic_noise(1, 1.0);
        let exact = powered_gaussian_posterior(&data, &prior, &noise, 1).unwrap();
        let q = svi_full_gaussian(&data, &prior, &noise, 1, &SviOptions::default()).unwrap();
        assert!((q.mean()[0] - exact.mean()[0]).abs() < 1e-2);
        let rel = (q.cov()[(0, 0)] - exact.cov()[(0, 0)]).abs() / exact.cov()[(0, 0)];
        assert!(rel < 0.05, "relative covariance error {rel}");
    }

    #[test]
    fn doubling_power_halves_variance() {
        let data = draws(1.0, 50, 2);
        let prior = GaussianDist::univariate(0.0, 100.0).unwrap();
        let noise = isotropic_noise(1, 1.0);
        let q1 = svi_full_gaussian(&data, &prior, &noise, 4, &SviOptions::default()).unwrap();
        let q2 = svi_full_gaussian(&data, &prior, &noise, 8, &SviOptions::default()).unwrap();
        let ratio = q2.cov()[(0, 0)] / q1.cov()[(0, 0)];
        assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn degenerate_direction_keeps_covariance_pd() {
        // second coordinate constant across the data
        let data: Vec<DVector<f64>> = draws(0.0, 30, 3)
            .into_iter()
            .map(|x| DVector::from_vec(vec![x[0], 5.0]))
            .collect();
        let prior = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2) * 10.0).unwrap();
        let q = svi_full_gaussian(&data, &prior, &isotropic_noise(2, 1.0), 2, &SviOptions::default()).unwrap();
        assert!(linalg::cholesky(q.cov()).is_ok());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data: Vec<DVector<f64>> = (0..20)
            .map(|i| DVector::from_vec(vec![0.1 * i as f64, 1.0 - 0.05 * i as f64, 0.3]))
            .collect();
        let prior = GaussianDist::new(DVector::zeros(3), DMatrix::identity(3, 3) * 4.0).unwrap();
        let noise = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, 0.1, 0.0, 0.1, 1.5]);
        let model = GaussianMeanModel::new(&data, &prior, &noise, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let eps = standard_normals(3, 4, &mut rng);
            let flat: Vec<f64> = standard_normals(9, 1, &mut rng)[0].iter().map(|v| 0.5 * v).collect();
            let params = GaussianVariationalParams::unflatten(3, &flat);
            let analytic = elbo_gradient(&model, &params, &eps).flatten();
            for i in 0..flat.len() {
                let h = 1e-5;
                let mut up = flat.clone();
                let mut down = flat.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (elbo_estimate(&model, &GaussianVariationalParams::unflatten(3, &up), &eps)
                    - elbo_estimate(&model, &GaussianVariationalParams::unflatten(3, &down), &eps))
                    / (2.0 * h);
                let rel = (fd - analytic[i]).abs() / analytic[i].abs().max(1.0);
                assert!(rel < 1e-3, "coordinate {i}: fd {fd} analytic {}", analytic[i]);
            }
        }
    }

    #[test]
    fn log_joint_matches_direct_sum() {
        let data = draws(0.5, 7, 4);
        let prior = GaussianDist::univariate(1.0, 2.0).unwrap();
        let noise = isotropic_noise(1, 0.7);
        let model = GaussianMeanModel::new(&data, &prior, &noise, 3).unwrap();
        let theta = DVector::from_element(1, 0.2);
        let lik = GaussianDist::new(theta.clone(), noise.clone()).unwrap();
        let direct: f64 =
            3.0 * data.iter().map(|x| lik.log_pdf(x).unwrap()).sum::<f64>() + prior.log_pdf(&theta).unwrap();
        assert!((model.log_joint(&theta) - direct).abs() < 1e-10);
    }

    #[test]
    fn rejects_zero_samples() {
        let data = draws(0.0, 5, 5);
        let prior = GaussianDist::univariate(0.0, 1.0).unwrap();
        let opts = SviOptions {
            mc_samples: 0,
            ..SviOptions::default()
        };
        assert!(svi_full_gaussian(&data, &prior, &isotropic_noise(1, 1.0), 1, &opts).is_err());
    }
}
