//! Gaussian, Gaussian-mixture and discrete measures, together with the two
//! distances used for aggregation: Bures-Wasserstein (closed form for
//! Gaussians) and the RKHS/MMD distance between kernel mean embeddings.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `sum(weights) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;
const NEG_WEIGHT_TOL: f64 = 1e-14;

fn check_simplex(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -NEG_WEIGHT_TOL) {
        return Err(Error::InvalidWeights(format!("weight {w} outside the simplex")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(weights.iter().map(|w| w.max(0.0)).collect())
}

/// Rescales nonnegative weights onto the simplex.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidWeights("cannot normalise weights".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multivariate normal `N(mean, cov)` with a PSD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::EmptyInput);
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mean has non-finite entries".into()));
        }
        linalg::check_psd(&cov)?;
        let cov = linalg::symmetrize(&cov);
        Ok(Self { mean, cov })
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    /// Precomputes the Cholesky factor for repeated density evaluation.
    pub fn prepare(&self) -> Result<PreparedGaussian> {
        let chol = linalg::cholesky(&self.cov).map_err(|_| Error::SingularCovariance)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(PreparedGaussian {
            mean: self.mean.clone(),
            chol,
            log_norm: -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        self.prepare()?.log_pdf(x)
    }

    /// `count` draws, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let mut rng = rng_for(seed);
        self.sample_with(count, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<DVector<f64>>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let chol = linalg::cholesky(&self.cov)?;
        Ok((0..count).map(|_| draw(&self.mean, &chol, rng)).collect())
    }
}

fn draw<R: Rng + ?Sized>(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    mean + chol * z
}

/// A Gaussian with its Cholesky factor cached.
#[derive(Debug, Clone)]
pub struct PreparedGaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl PreparedGaussian {
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let diff = x - &self.mean;
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .ok_or(Error::SingularCovariance)?;
        Ok(self.log_norm - 0.5 * z.norm_squared())
    }
}

/// Squared Bures-Wasserstein distance between two Gaussians.
pub fn w2_gaussian_squared(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let root_b = linalg::sqrtm_psd(&b.cov)?;
    let inner = linalg::symmetrize(&(&root_b * &a.cov * &root_b));
    let cross = linalg::sqrtm_psd(&inner)?;
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok((mean_term + bures).max(0.0))
}

/// 2-Wasserstein distance between two Gaussians.
pub fn w2_gaussian(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    w2_gaussian_squared(a, b).map(f64::sqrt)
}

/// Finite mixture of Gaussians sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianDist>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianDist>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                found: weights.len(),
            });
        }
        let weights = check_simplex(&weights)?;
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
        Ok(Self { weights, components })
    }

    pub fn single(component: GaussianDist) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianDist] {
        &self.components
    }

    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .fold(DVector::zeros(self.dim()), |acc, (w, c)| acc + c.mean() * *w)
    }

    pub fn prepare(&self) -> Result<PreparedMixture> {
        let parts = self
            .weights
            .iter()
            .zip(&self.components)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| Ok((w.ln(), c.prepare()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedMixture { parts })
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        self.prepare()?.log_pdf(x)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        Ok(self.sample_labeled(count, seed)?.0)
    }

    /// Draws together with the index of the component each draw came from.
    pub fn sample_labeled(&self, count: usize, seed: u64) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
        let mut rng = rng_for(seed);
        self.sample_labeled_with(count, &mut rng)
    }

    pub fn sample_labeled_with<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
        let chols = self
            .components
            .iter()
            .map(|c| linalg::cholesky(c.cov()))
            .collect::<Result<Vec<_>>>()?;
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let mut points = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let u: f64 = unit.sample(rng);
            let mut acc = 0.0;
            let mut k = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            points.push(draw(self.components[k].mean(), &chols[k], rng));
            labels.push(k);
        }
        Ok((points, labels))
    }
}

#[derive(Debug, Clone)]
pub struct PreparedMixture {
    parts: Vec<(f64, PreparedGaussian)>,
}

impl PreparedMixture {
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let terms = self
            .parts
            .iter()
            .map(|(lw, g)| Ok(lw + g.log_pdf(x)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms))
    }
}

/// Weighted atom cloud in `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: weights.len(),
            });
        }
        let weights = check_simplex(&weights)?;
        let dim = atoms[0].len();
        if let Some(a) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: a.len(),
            });
        }
        Ok(Self { atoms, weights })
    }

    /// Equal weight on every atom.
    pub fn uniform(atoms: Vec<DVector<f64>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = 1.0 / atoms.len() as f64;
        let weights = vec![w; atoms.len()];
        // the naive sum of 1/n can miss 1 by a few ulps; renormalise exactly
        let total: f64 = weights.iter().sum();
        Self::new(atoms, weights.iter().map(|v| v / total).collect())
    }

    pub fn dirac(point: DVector<f64>) -> Self {
        Self {
            atoms: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> DVector<f64> {
        self.atoms
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (a, w)| acc + a * *w)
    }
}

/// Radial basis function kernel `exp(-|x-y|^2 / (2 h^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    bandwidth: f64,
}

impl RbfKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "RBF bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    /// Median of the pairwise distances among all pooled atoms.
    ///
    /// Falls back to bandwidth 1 when every atom coincides.
    pub fn median_heuristic<'a, I>(measures: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a DiscreteMeasure>,
    {
        let pooled: Vec<&DVector<f64>> = measures.into_iter().flat_map(|m| m.atoms()).collect();
        if pooled.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
        for i in 0..pooled.len() {
            for j in (i + 1)..pooled.len() {
                dists.push((pooled[i] - pooled[j]).norm());
            }
        }
        let h = if dists.is_empty() { 1.0 } else { linalg::median(&dists)? };
        Self::new(if h > 0.0 { h } else { 1.0 })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d2 = (x - y).norm_squared();
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// `<P, Q>` in the RKHS of `kernel`: `sum_ij p_i q_j k(x_i, y_j)`.
pub fn embedding_inner(p: &DiscreteMeasure, q: &DiscreteMeasure, kernel: &RbfKernel) -> f64 {
    let mut total = 0.0;
    for (x, wx) in p.atoms.iter().zip(&p.weights) {
        let mut row = 0.0;
        for (y, wy) in q.atoms.iter().zip(&q.weights) {
            row += wy * kernel.eval(x, y);
        }
        total += wx * row;
    }
    total
}

/// RKHS distance between the kernel mean embeddings of `p` and `q`.
pub fn mmd_distance(p: &DiscreteMeasure, q: &DiscreteMeasure, kernel: &RbfKernel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let sq = embedding_inner(p, p, kernel) - 2.0 * embedding_inner(p, q, kernel) + embedding_inner(q, q, kernel);
    Ok(sq.max(0.0).sqrt())
}
