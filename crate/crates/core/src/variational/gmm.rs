//! Coordinate-ascent VI for the Bayesian Gaussian mixture with a
//! Dirichlet prior on the weights and a Normal-Wishart prior on each
//! component. With likelihood power `m`, every sufficient statistic is
//! multiplied by `m`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use super::CaviOptions;
use crate::distributions::{GaussianDist, GaussianMixture};
use crate::error::{Error, Result};
use crate::linalg;

const RESP_FLOOR: f64 = 1e-12;
const WISHART_RIDGE: f64 = 1e-10;
const LLOYD_ITERS: usize = 25;

/// Hyperparameters `(alpha0, beta0, m0, W0, nu0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub alpha0: f64,
    pub beta0: f64,
    pub m0: DVector<f64>,
    pub w0: DMatrix<f64>,
    pub nu0: f64,
}

impl GmmPrior {
    pub fn new(alpha0: f64, beta0: f64, m0: DVector<f64>, w0: DMatrix<f64>, nu0: f64) -> Result<Self> {
        let prior = Self {
            alpha0,
            beta0,
            m0,
            w0,
            nu0,
        };
        prior.validate()?;
        Ok(prior)
    }

    /// A vague prior centred on the coordinatewise median of `data`, with
    /// `E[Lambda]` matching the inverse squared robust scale (MAD) of each
    /// coordinate.
    pub fn weakly_informative(data: &[DVector<f64>]) -> Result<Self> {
        let m0 = linalg::coordinatewise_median(data)?;
        let dim = m0.len();
        let nu0 = dim as f64 + 2.0;
        let mut w0 = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let dev: Vec<f64> = data.iter().map(|x| (x[j] - m0[j]).abs()).collect();
            let mad = 1.4826 * linalg::median(&dev)?;
            let scale = if mad > 1e-8 { mad } else { 1.0 };
            w0[(j, j)] = 1.0 / (scale * scale * nu0);
        }
        Self::new(1.0, 1e-2, m0, w0, nu0)
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::EmptyInput);
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(Error::InvalidArgument("alpha0 and beta0 must be positive".into()));
        }
        if !(self.nu0 > d as f64 - 1.0) {
            return Err(Error::InvalidArgument(format!(
                "nu0 must exceed {} for dimension {d}",
                d as f64 - 1.0
            )));
        }
        if self.w0.nrows() != d || self.w0.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.w0.nrows(),
            });
        }
        linalg::check_symmetric(&self.w0)?;
        linalg::cholesky(&self.w0)?;
        Ok(())
    }
}

/// Fitted variational parameters. `counts` holds the power-scaled effective
/// counts `m * sum_n r_nk`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmVariationalState {
    pub responsibilities: DMatrix<f64>,
    pub counts: DVector<f64>,
    pub means: Vec<DVector<f64>>,
    pub scales: Vec<DMatrix<f64>>,
    pub dofs: Vec<f64>,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub power: usize,
    pub elbo_trace: Vec<f64>,
}

impl GmmVariationalState {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn elbo(&self) -> Option<f64> {
        self.elbo_trace.last().copied()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components();
        if k == 0 {
            return Err(Error::InvalidState("no components".into()));
        }
        let d = self.dim();
        let lens = [self.scales.len(), self.dofs.len(), self.betas.len(), self.alphas.len()];
        if lens.iter().any(|&l| l != k) {
            return Err(Error::InvalidState("component parameter lengths differ".into()));
        }
        for c in 0..k {
            if self.means[c].len() != d || self.scales[c].nrows() != d || self.scales[c].ncols() != d {
                return Err(Error::InvalidState(format!("component {c} has wrong dimension")));
            }
            if !(self.betas[c] > 0.0 && self.alphas[c] > 0.0 && self.dofs[c] > d as f64 - 1.0) {
                return Err(Error::InvalidState(format!(
                    "component {c} has invalid hyperparameters"
                )));
            }
            linalg::check_psd(&self.scales[c]).map_err(|e| Error::InvalidState(format!("component {c}: {e}")))?;
        }
        Ok(())
    }
}

fn ln_multigamma_terms(nu: f64, d: usize) -> f64 {
    (1..=d).map(|i| ln_gamma((nu + 1.0 - i as f64) / 2.0)).sum()
}

/// `ln B(W, nu)`, the log normaliser of the Wishart density.
fn ln_wishart_norm(log_det_w: f64, nu: f64, d: usize) -> f64 {
    let df = d as f64;
    -0.5 * nu * log_det_w - (0.5 * nu * df * 2f64.ln() + 0.25 * df * (df - 1.0) * PI.ln() + ln_multigamma_terms(nu, d))
}

fn ln_dirichlet_norm(alphas: &[f64]) -> f64 {
    ln_gamma(alphas.iter().sum()) - alphas.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

fn expected_log_det_lambda(log_det_w: f64, nu: f64, d: usize) -> f64 {
    (1..=d).map(|i| digamma((nu + 1.0 - i as f64) / 2.0)).sum::<f64>() + d as f64 * 2f64.ln() + log_det_w
}

fn invert_scale(w_inv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = linalg::symmetrize(w_inv);
    match linalg::inverse_pd(&sym) {
        Ok(w) => Ok(linalg::symmetrize(&w)),
        Err(_) => {
            let d = sym.nrows();
            let ridge = WISHART_RIDGE * sym.diagonal().abs().max().max(1.0);
            linalg::inverse_pd(&(sym + DMatrix::identity(d, d) * ridge)).map(|w| linalg::symmetrize(&w))
        }
    }
}

struct Stats {
    /// Unscaled `sum_n r_nk`.
    raw: Vec<f64>,
    xbar: Vec<DVector<f64>>,
    scatter: Vec<DMatrix<f64>>,
}

fn statistics(data: &[DVector<f64>], resp: &DMatrix<f64>) -> Stats {
    let k = resp.ncols();
    let d = data[0].len();
    let mut raw = vec![0.0; k];
    let mut xbar = vec![DVector::zeros(d); k];
    let mut scatter = vec![DMatrix::zeros(d, d); k];
    for c in 0..k {
        for (n, x) in data.iter().enumerate() {
            raw[c] += resp[(n, c)];
            xbar[c] += x * resp[(n, c)];
        }
        if raw[c] > 0.0 {
            xbar[c] /= raw[c];
        }
        for (n, x) in data.iter().enumerate() {
            let diff = x - &xbar[c];
            scatter[c] += &diff * diff.transpose() * resp[(n, c)];
        }
        if raw[c] > 0.0 {
            scatter[c] /= raw[c];
        }
    }
    Stats { raw, xbar, scatter }
}

struct Fitter<'a> {
    data: &'a [DVector<f64>],
    prior: &'a GmmPrior,
    w0_inv: DMatrix<f64>,
    w0_log_det: f64,
    power: f64,
}

struct Params {
    counts: DVector<f64>,
    means: Vec<DVector<f64>>,
    scales: Vec<DMatrix<f64>>,
    dofs: Vec<f64>,
    betas: Vec<f64>,
    alphas: Vec<f64>,
}

impl Fitter<'_> {
    fn m_step(&self, stats: &Stats) -> Result<Params> {
        let p = self.prior;
        let k = stats.raw.len();
        let d = p.dim();
        let mut params = Params {
            counts: DVector::zeros(k),
            means: Vec::with_capacity(k),
            scales: Vec::with_capacity(k),
            dofs: Vec::with_capacity(k),
            betas: Vec::with_capacity(k),
            alphas: Vec::with_capacity(k),
        };
        for c in 0..k {
            let nk = self.power * stats.raw[c];
            let beta = p.beta0 + nk;
            let nu = p.nu0 + nk;
            if !(beta > 0.0 && beta.is_finite() && nu > d as f64 - 1.0 && nu.is_finite()) {
                return Err(Error::DegenerateComponent { component: c });
            }
            let mean = (&p.m0 * p.beta0 + &stats.xbar[c] * nk) / beta;
            let shift = &stats.xbar[c] - &p.m0;
            let w_inv =
                &self.w0_inv + &stats.scatter[c] * nk + &shift * shift.transpose() * (p.beta0 * nk / (p.beta0 + nk));
            let scale = invert_scale(&w_inv).map_err(|_| Error::DegenerateComponent { component: c })?;
            params.counts[c] = nk;
            params.means.push(mean);
            params.scales.push(scale);
            params.dofs.push(nu);
            params.betas.push(beta);
            params.alphas.push(p.alpha0 + nk);
        }
        Ok(params)
    }

    fn log_dets(params: &Params) -> Result<Vec<f64>> {
        params
            .scales
            .iter()
            .enumerate()
            .map(|(c, w)| linalg::log_det_pd(w).map_err(|_| Error::DegenerateComponent { component: c }))
            .collect()
    }

    fn e_step(&self, params: &Params) -> Result<DMatrix<f64>> {
        let k = params.means.len();
        let d = self.prior.dim();
        let df = d as f64;
        let log_dets = Self::log_dets(params)?;
        let alpha_hat: f64 = params.alphas.iter().sum();
        let log_pi: Vec<f64> = params.alphas.iter().map(|&a| digamma(a) - digamma(alpha_hat)).collect();
        let log_lambda: Vec<f64> = (0..k)
            .map(|c| expected_log_det_lambda(log_dets[c], params.dofs[c], d))
            .collect();
        let n = self.data.len();
        let mut resp = DMatrix::zeros(n, k);
        let mut row = vec![0.0; k];
        for (i, x) in self.data.iter().enumerate() {
            for c in 0..k {
                let diff = x - &params.means[c];
                let quad = df / params.betas[c] + params.dofs[c] * diff.dot(&(&params.scales[c] * &diff));
                row[c] = log_pi[c] + 0.5 * log_lambda[c] - 0.5 * df * (2.0 * PI).ln() - 0.5 * quad;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for c in 0..k {
                let v = (row[c] - max).exp();
                resp[(i, c)] = v;
                total += v;
            }
            for c in 0..k {
                resp[(i, c)] /= total;
            }
        }
        Ok(floor_rows(resp))
    }

    fn elbo(&self, resp: &DMatrix<f64>, stats: &Stats, params: &Params) -> Result<f64> {
        let p = self.prior;
        let k = params.means.len();
        let d = p.dim();
        let df = d as f64;
        let log_dets = Self::log_dets(params)?;
        let alpha_hat: f64 = params.alphas.iter().sum();
        let log_pi: Vec<f64> = params.alphas.iter().map(|&a| digamma(a) - digamma(alpha_hat)).collect();
        let mut total = 0.0;

        // m * (E[ln p(X | Z, mu, Lambda)] + E[ln p(Z | pi)] - E[ln q(Z)])
        let ln2pi = (2.0 * PI).ln();
        for c in 0..k {
            let nk = params.counts[c];
            let w = &params.scales[c];
            let nu = params.dofs[c];
            let log_lambda = expected_log_det_lambda(log_dets[c], nu, d);
            let diff = &stats.xbar[c] - &params.means[c];
            let trace = (&stats.scatter[c] * w).trace();
            total +=
                0.5 * nk * (log_lambda - df / params.betas[c] - nu * trace - nu * diff.dot(&(w * &diff)) - df * ln2pi);
            total += nk * log_pi[c];
        }
        let entropy_z: f64 = resp.iter().filter(|&&r| r > 0.0).map(|&r| r * r.ln()).sum();
        total -= self.power * entropy_z;

        // E[ln p(pi)] - E[ln q(pi)]
        let sum_log_pi: f64 = log_pi.iter().sum();
        total += ln_dirichlet_norm(&vec![p.alpha0; k]) + (p.alpha0 - 1.0) * sum_log_pi;
        total -= ln_dirichlet_norm(&params.alphas)
            + params
                .alphas
                .iter()
                .zip(&log_pi)
                .map(|(a, l)| (a - 1.0) * l)
                .sum::<f64>();

        // E[ln p(mu, Lambda)] - E[ln q(mu, Lambda)]
        let ln_b0 = ln_wishart_norm(self.w0_log_det, p.nu0, d);
        for c in 0..k {
            let w = &params.scales[c];
            let nu = params.dofs[c];
            let beta = params.betas[c];
            let log_lambda = expected_log_det_lambda(log_dets[c], nu, d);
            let diff = &params.means[c] - &p.m0;
            total += 0.5
                * (df * (p.beta0 / (2.0 * PI)).ln() + log_lambda
                    - df * p.beta0 / beta
                    - p.beta0 * nu * diff.dot(&(w * &diff)));
            total += ln_b0 + 0.5 * (p.nu0 - df - 1.0) * log_lambda - 0.5 * nu * (&self.w0_inv * w).trace();

            let ln_b = ln_wishart_norm(log_dets[c], nu, d);
            let entropy_lambda = -ln_b - 0.5 * (nu - df - 1.0) * log_lambda + 0.5 * nu * df;
            total -= 0.5 * log_lambda + 0.5 * df * (beta / (2.0 * PI)).ln() - 0.5 * df - entropy_lambda;
        }
        Ok(total)
    }
}

fn floor_rows(mut resp: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in resp.row_iter_mut() {
        let mut total = 0.0;
        for v in row.iter_mut() {
            if !(*v >= RESP_FLOOR) {
                *v = RESP_FLOOR;
            }
            total += *v;
        }
        row /= total;
    }
    resp
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Seeded k-means++ seeding followed by Lloyd iterations; returns hard
/// assignments.
fn kmeans_assignments(data: &[DVector<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[idx].clone());
        for (i, x) in data.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(x, &centers[centers.len() - 1]));
        }
    }
    let assign = |centers: &[DVector<f64>]| -> Vec<usize> {
        data.iter()
            .map(|x| {
                let mut best = 0;
                for c in 1..centers.len() {
                    if sq_dist(x, &centers[c]) < sq_dist(x, &centers[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..LLOYD_ITERS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> = data
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| x)
                .collect();
            if !members.is_empty() {
                *center = members.iter().fold(DVector::zeros(center.len()), |acc, x| acc + *x) / members.len() as f64;
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Fits the powered variational GMM with `k` components.
///
/// Each iteration performs an M-step from the current responsibilities,
/// evaluates the ELBO, then updates the responsibilities. Iteration stops
/// after `options.max_iters` iterations or once the ELBO gain drops below
/// `options.tol`.
pub fn cavi_gmm(
    data: &[DVector<f64>],
    k: usize,
    prior: &GmmPrior,
    power: usize,
    options: &CaviOptions,
    seed: u64,
) -> Result<GmmVariationalState> {
    if data.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if power == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    prior.validate()?;
    let d = prior.dim();
    if let Some(x) = data.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let w0_inv = linalg::inverse_pd(&prior.w0)?;
    let fitter = Fitter {
        data,
        prior,
        w0_inv: linalg::symmetrize(&w0_inv),
        w0_log_det: linalg::log_det_pd(&prior.w0)?,
        power: power as f64,
    };

    let labels = kmeans_assignments(data, k, seed);
    let mut resp = DMatrix::zeros(data.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        resp[(i, l)] = 1.0;
    }
    let mut resp = floor_rows(resp);
    let mut trace = Vec::new();
    let mut params;
    loop {
        let stats = statistics(data, &resp);
        params = fitter.m_step(&stats)?;
        let elbo = fitter.elbo(&resp, &stats, &params)?;
        if !elbo.is_finite() {
            return Err(Error::InvalidState("non-finite ELBO".into()));
        }
        let gain = trace.last().map(|&last| elbo - last);
        trace.push(elbo);
        if trace.len() >= options.max_iters.max(1) || gain.is_some_and(|g| g < options.tol) {
            break;
        }
        resp = fitter.e_step(&params)?;
    }
    Ok(GmmVariationalState {
        responsibilities: resp,
        counts: params.counts,
        means: params.means,
        scales: params.scales,
        dofs: params.dofs,
        betas: params.betas,
        alphas: params.alphas,
        power,
        elbo_trace: trace,
    })
}

/// Precision of the Student-t predictive component:
/// `L = ((nu + 1 - D) * beta / (1 + beta)) * W`.
pub fn predictive_precision(nu: f64, beta: f64, w: &DMatrix<f64>) -> DMatrix<f64> {
    let d = w.nrows() as f64;
    w * ((nu + 1.0 - d) * beta / (1.0 + beta))
}

/// Mixture of multivariate Student-t densities.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTMixture {
    pub weights: Vec<f64>,
    pub locations: Vec<DVector<f64>>,
    pub precisions: Vec<DMatrix<f64>>,
    pub dofs: Vec<f64>,
}

impl StudentTMixture {
    pub fn dim(&self) -> usize {
        self.locations.first().map_or(0, |m| m.len())
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let df = d as f64;
        let mut terms = Vec::with_capacity(self.weights.len());
        for c in 0..self.weights.len() {
            let nu = self.dofs[c];
            let l = &self.precisions[c];
            let diff = x - &self.locations[c];
            let maha = diff.dot(&(l * &diff));
            let log_t = ln_gamma((nu + df) / 2.0) - ln_gamma(nu / 2.0) + 0.5 * linalg::log_det_pd(l)?
                - 0.5 * df * (nu * PI).ln()
                - 0.5 * (nu + df) * (maha / nu).ln_1p();
            terms.push(self.weights[c].ln() + log_t);
        }
        Ok(crate::distributions::log_sum_exp(&terms))
    }
}

/// The exact posterior predictive: a Student-t mixture with weights
/// `alpha_k / sum(alpha)`, locations `m_k`, precisions `L_k` and
/// `nu_k + 1 - D` degrees of freedom.
pub fn student_t_predictive(state: &GmmVariationalState) -> Result<StudentTMixture> {
    state.validate()?;
    let d = state.dim() as f64;
    let total: f64 = state.alphas.iter().sum();
    Ok(StudentTMixture {
        weights: state.alphas.iter().map(|a| a / total).collect(),
        locations: state.means.clone(),
        precisions: (0..state.components())
            .map(|c| predictive_precision(state.dofs[c], state.betas[c], &state.scales[c]))
            .collect(),
        dofs: state.dofs.iter().map(|nu| nu + 1.0 - d).collect(),
    })
}

/// Gaussian summary of the predictive. With `as_gaussian_mixture` each
/// Student-t component is moment matched (covariance `L^-1 * dof/(dof-2)`,
/// or the raw `L^-1` with a warning when `dof <= 2`); otherwise the
/// components carry the raw scale `L^-1`.
pub fn gmm_posterior_predictive(state: &GmmVariationalState, as_gaussian_mixture: bool) -> Result<GaussianMixture> {
    let t = student_t_predictive(state)?;
    let mut components = Vec::with_capacity(t.weights.len());
    for c in 0..t.weights.len() {
        let scale =
            linalg::inverse_pd(&t.precisions[c]).map_err(|e| Error::InvalidState(format!("component {c}: {e}")))?;
        let dof = t.dofs[c];
        let factor = if !as_gaussian_mixture {
            1.0
        } else if dof > 2.0 {
            dof / (dof - 2.0)
        } else {
            log::warn!("component {c}: predictive has {dof} degrees of freedom, using raw scale");
            1.0
        };
        components.push(GaussianDist::new(
            t.locations[c].clone(),
            linalg::symmetrize(&(scale * factor)),
        )?);
    }
    GaussianMixture::new(t.weights, components)
}
