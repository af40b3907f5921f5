//! Robust aggregation of subset posteriors.
//!
//! * [`gaussian_geometric_median`]: coordinatewise median of the means plus the
//!   Bures fixed-point iteration `S <- (1/m) sum_j (S^1/2 Sigma_j S^1/2)^1/2`
//!   for the covariance.
//! * [`gmm_median`]: multi-marginal optimal transport between the components
//!   of `m` Gaussian mixtures, solved as a linear program over the coupling
//!   tensor. Each tensor entry is the Gaussian median of one component tuple.
//! * [`weiszfeld_median`]: Weiszfeld iterations in the RKHS of an RBF kernel;
//!   the median is a convex combination of the input measures.
//! * [`metric_median`]: the input at the centre of the smallest ball holding a
//!   strict majority of the inputs.
//! * [`covariance_rescale`]: divide every covariance by `sqrt(m)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::{
    embedding_inner, normalize_weights, w2_gaussian, w2_gaussian_squared, DiscreteMeasure, GaussianDist,
    GaussianMixture, RbfKernel,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{solve_lp, LpProblem};

/// Default number of covariance fixed-point iterations.
pub const DEFAULT_FIXED_POINT_ITERS: usize = 100;
/// Relative Frobenius change below which the fixed point stops early.
pub const FIXED_POINT_REL_TOL: f64 = 1e-10;
/// Largest multi-marginal coupling tensor `gmm_median` will build.
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;
/// Coupling mass below which a component tuple is dropped from the output.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Distance below which a Weiszfeld iterate is treated as sitting on an input.
pub const WEISZFELD_SINGULAR_TOL: f64 = 1e-12;
pub const DEFAULT_WEISZFELD_MAX_ITERS: usize = 1000;

/// Distance used between subset posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceKind {
    /// Bures-Wasserstein for Gaussians; the mixture-Wasserstein (component
    /// OT with Bures costs) for Gaussian mixtures.
    BuresW2,
    Mmd(RbfKernel),
}

/// Something a [`SubsetPosteriorSet`] can hold.
pub trait SubsetPosterior: Clone + Send + Sync {
    fn dim(&self) -> usize;
    fn distance(&self, other: &Self, kind: &DistanceKind) -> Result<f64>;
}

impl SubsetPosterior for GaussianDist {
    fn dim(&self) -> usize {
        GaussianDist::dim(self)
    }

    fn distance(&self, other: &Self, kind: &DistanceKind) -> Result<f64> {
        match kind {
            DistanceKind::BuresW2 => w2_gaussian(self, other),
            DistanceKind::Mmd(_) => Err(Error::InvalidArgument(
                "MMD is defined for discrete measures only".into(),
            )),
        }
    }
}

impl SubsetPosterior for GaussianMixture {
    fn dim(&self) -> usize {
        GaussianMixture::dim(self)
    }

    fn distance(&self, other: &Self, kind: &DistanceKind) -> Result<f64> {
        match kind {
            DistanceKind::BuresW2 => mixture_w2(self, other),
            DistanceKind::Mmd(_) => Err(Error::InvalidArgument(
                "MMD is defined for discrete measures only".into(),
            )),
        }
    }
}

impl SubsetPosterior for DiscreteMeasure {
    fn dim(&self) -> usize {
        DiscreteMeasure::dim(self)
    }

    fn distance(&self, other: &Self, kind: &DistanceKind) -> Result<f64> {
        match kind {
            DistanceKind::Mmd(k) => crate::distributions::mmd_distance(self, other, k),
            DistanceKind::BuresW2 => Err(Error::InvalidArgument(
                "Bures-Wasserstein needs Gaussian posteriors".into(),
            )),
        }
    }
}

/// The `m` subset posteriors together with their provenance.
#[derive(Debug, Clone)]
pub struct SubsetPosteriorSet<T> {
    posteriors: Vec<T>,
    group_sizes: Vec<usize>,
    seeds: Vec<u64>,
}

impl<T: SubsetPosterior> SubsetPosteriorSet<T> {
    pub fn new(posteriors: Vec<T>, group_sizes: Vec<usize>, seeds: Vec<u64>) -> Result<Self> {
        let first = posteriors.first().ok_or(Error::EmptySet)?;
        if group_sizes.len() != posteriors.len() || seeds.len() != posteriors.len() {
            return Err(Error::DimensionMismatch {
                expected: posteriors.len(),
                found: group_sizes.len().min(seeds.len()),
            });
        }
        let dim = first.dim();
        if let Some(p) = posteriors.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        Ok(Self {
            posteriors,
            group_sizes,
            seeds,
        })
    }

    /// A set without provenance (sizes and seeds zeroed).
    pub fn from_posteriors(posteriors: Vec<T>) -> Result<Self> {
        let m = posteriors.len();
        Self::new(posteriors, vec![0; m], vec![0; m])
    }
}

impl<T> SubsetPosteriorSet<T> {
    pub fn posteriors(&self) -> &[T] {
        &self.posteriors
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MedianReport<T> {
    pub result: T,
    pub iterations: usize,
    pub objective: f64,
    /// Distance from the result to each input.
    pub distances: Vec<f64>,
    /// Weiszfeld weights over the inputs, the flattened coupling tensor for
    /// mixtures, or uniform barycentric weights for Gaussians.
    pub weights: Vec<f64>,
    /// Objective after every iteration (Weiszfeld) or empty.
    pub objective_trace: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Gaussians

/// One application of the covariance update map.
pub fn covariance_update(s: &DMatrix<f64>, covs: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let root = linalg::sqrtm_psd(s)?;
    let mut acc = DMatrix::zeros(s.nrows(), s.ncols());
    for cov in covs {
        let inner = linalg::symmetrize(&(&root * *cov * &root));
        acc += linalg::sqrtm_psd(&inner)?;
    }
    Ok(linalg::symmetrize(&(acc / covs.len() as f64)))
}

fn default_initial_covariance(covs: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let diagonals: Vec<DVector<f64>> = covs.iter().map(|c| c.diagonal()).collect();
    let mut diag = linalg::coordinatewise_median(&diagonals)?;
    let largest = diagonals.iter().flat_map(|d| d.iter().cloned()).fold(0.0_f64, f64::max);
    for v in diag.iter_mut() {
        *v = v.max(1e-12 * largest);
    }
    Ok(DMatrix::from_diagonal(&diag))
}

/// Gaussian median of a slice of Gaussians; returns the result and the
/// number of iterations performed.
fn gaussian_median_of(
    inputs: &[&GaussianDist],
    iters: usize,
    s0: Option<&DMatrix<f64>>,
) -> Result<(GaussianDist, usize)> {
    let first = inputs.first().ok_or(Error::EmptySet)?;
    let dim = first.dim();
    if let Some(g) = inputs.iter().find(|g| g.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: g.dim(),
        });
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("at least one iteration is required".into()));
    }
    let means: Vec<DVector<f64>> = inputs.iter().map(|g| g.mean().clone()).collect();
    let mean = linalg::coordinatewise_median(&means)?;
    let covs: Vec<&DMatrix<f64>> = inputs.iter().map(|g| g.cov()).collect();
    let mut s = match s0 {
        Some(s0) => {
            if s0.nrows() != dim || s0.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s0.nrows(),
                });
            }
            linalg::cholesky(s0)?;
            s0.clone()
        }
        None => default_initial_covariance(&covs)?,
    };
    let mut performed = 0;
    for _ in 0..iters {
        let next = covariance_update(&s, &covs)?;
        performed += 1;
        let change = (&next - &s).norm();
        let scale = s.norm();
        s = next;
        if change <= FIXED_POINT_REL_TOL * scale {
            break;
        }
    }
    Ok((GaussianDist::new(mean, s)?, performed))
}

/// Gaussian geometric median of the set: median mean, fixed-point covariance.
///
/// `s0` defaults to the diagonal matrix of coordinatewise medians of the input
/// covariance diagonals.
pub fn gaussian_geometric_median(
    set: &SubsetPosteriorSet<GaussianDist>,
    iters: usize,
    s0: Option<&DMatrix<f64>>,
) -> Result<MedianReport<GaussianDist>> {
    let inputs: Vec<&GaussianDist> = set.posteriors().iter().collect();
    let (result, iterations) = gaussian_median_of(&inputs, iters, s0)?;
    let distances = inputs
        .iter()
        .map(|g| w2_gaussian(&result, g))
        .collect::<Result<Vec<_>>>()?;
    let m = inputs.len();
    Ok(MedianReport {
        result,
        iterations,
        objective: distances.iter().sum(),
        distances,
        weights: vec![1.0 / m as f64; m],
        objective_trace: Vec::new(),
    })
}

/// Cost of a component tuple: mean squared W2 distance to its Gaussian median.
pub fn gmm_w2_gaussian_median_cost(tuple: &[&GaussianDist]) -> Result<(f64, GaussianDist)> {
    let (median, _) = gaussian_median_of(tuple, DEFAULT_FIXED_POINT_ITERS, None)?;
    let mut cost = 0.0;
    for g in tuple {
        cost += w2_gaussian_squared(g, &median)?;
    }
    Ok((cost / tuple.len() as f64, median))
}

// ---------------------------------------------------------------------------
// Gaussian mixtures

/// Row-major (last index fastest) decoding of a flat tensor index.
pub fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (d, &k) in shape.iter().enumerate().rev() {
        idx[d] = flat % k;
        flat /= k;
    }
    idx
}

/// Equality constraints for couplings with the given marginals: one row per
/// (marginal, component), minus the last row of every block after the first,
/// which the shared total mass makes redundant.
pub fn mmot_problem(shape: &[usize], marginals: &[Vec<f64>], costs: Vec<f64>) -> Result<LpProblem> {
    let total: usize = shape.iter().product();
    if costs.len() != total || marginals.len() != shape.len() {
        return Err(Error::InvalidArgument("coupling shape does not match data".into()));
    }
    let mut row_of = Vec::with_capacity(shape.len());
    let mut rows = 0;
    for (j, &k) in shape.iter().enumerate() {
        if marginals[j].len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: marginals[j].len(),
            });
        }
        row_of.push(rows);
        rows += if j == 0 { k } else { k - 1 };
    }
    let mut a = DMatrix::zeros(rows, total);
    let mut b = vec![0.0; rows];
    for (j, &k) in shape.iter().enumerate() {
        let keep = if j == 0 { k } else { k - 1 };
        for c in 0..keep {
            b[row_of[j] + c] = marginals[j][c];
        }
    }
    for flat in 0..total {
        let idx = unflatten(flat, shape);
        for (j, &c) in idx.iter().enumerate() {
            let keep = if j == 0 { shape[j] } else { shape[j] - 1 };
            if c < keep {
                a[(row_of[j] + c, flat)] = 1.0;
            }
        }
    }
    Ok(LpProblem::new(costs, a, b)?)
}

/// Mixture-Wasserstein distance: optimal transport between the components
/// with squared Bures-Wasserstein ground cost.
pub fn mixture_w2(a: &GaussianMixture, b: &GaussianMixture) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let shape = [a.len(), b.len()];
    let mut costs = Vec::with_capacity(a.len() * b.len());
    for ca in a.components() {
        for cb in b.components() {
            costs.push(w2_gaussian_squared(ca, cb)?);
        }
    }
    let lp = mmot_problem(&shape, &[a.weights().to_vec(), b.weights().to_vec()], costs)?;
    let sol = solve_lp(&lp)?;
    Ok(sol.objective.max(0.0).sqrt())
}

/// Result of [`gmm_median`] with the coupling details kept.
#[derive(Debug, Clone)]
pub struct GmmMedianReport {
    pub report: MedianReport<GaussianMixture>,
    /// Number of components of each input mixture.
    pub shape: Vec<usize>,
    /// Cost tensor, flattened with the last index fastest.
    pub costs: Vec<f64>,
    /// Component tuples carrying coupling mass, with that mass.
    pub support: Vec<(Vec<usize>, f64)>,
}

/// Multi-marginal OT median of Gaussian mixtures.
pub fn gmm_median(set: &SubsetPosteriorSet<GaussianMixture>) -> Result<GmmMedianReport> {
    let mixtures = set.posteriors();
    let shape: Vec<usize> = mixtures.iter().map(GaussianMixture::len).collect();
    let entries = shape.iter().fold(1u128, |acc, &k| acc.saturating_mul(k as u128));
    if entries > MAX_TENSOR_ENTRIES as u128 {
        return Err(Error::TensorTooLarge {
            entries,
            limit: MAX_TENSOR_ENTRIES,
        });
    }
    let total = entries as usize;
    let tuple_of = |flat: usize| -> Vec<&GaussianDist> {
        unflatten(flat, &shape)
            .iter()
            .enumerate()
            .map(|(j, &k)| &mixtures[j].components()[k])
            .collect()
    };
    let costs = (0..total)
        .into_par_iter()
        .map(|flat| gmm_w2_gaussian_median_cost(&tuple_of(flat)).map(|(c, _)| c))
        .collect::<Result<Vec<f64>>>()?;

    let marginals: Vec<Vec<f64>> = mixtures.iter().map(|g| g.weights().to_vec()).collect();
    let lp = mmot_problem(&shape, &marginals, costs.clone())?;
    let solution = solve_lp(&lp).map_err(|e| match e {
        crate::lp::LpError::Infeasible => Error::InvalidState(
            "multi-marginal LP reported infeasible although the product coupling is feasible".into(),
        ),
        other => Error::Lp(other),
    })?;

    let mut support = Vec::new();
    let mut components = Vec::new();
    let mut raw_weights = Vec::new();
    for (flat, &w) in solution.x.iter().enumerate() {
        if w > SUPPORT_TOL {
            let (_, median) = gmm_w2_gaussian_median_cost(&tuple_of(flat))?;
            components.push(median);
            raw_weights.push(w);
            support.push((unflatten(flat, &shape), w));
        }
    }
    let result = GaussianMixture::new(normalize_weights(&raw_weights)?, components)?;
    let distances = mixtures
        .iter()
        .map(|g| mixture_w2(&result, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmMedianReport {
        report: MedianReport {
            result,
            iterations: solution.iterations,
            objective: solution.objective,
            distances,
            weights: solution.x,
            objective_trace: Vec::new(),
        },
        shape,
        costs,
        support,
    })
}

// ---------------------------------------------------------------------------
// Discrete measures

/// Gram matrix of kernel mean embeddings, `G_ij = <Q_i, Q_j>`.
pub fn embedding_gram(measures: &[DiscreteMeasure], kernel: &RbfKernel) -> DMatrix<f64> {
    let m = measures.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| embedding_inner(&measures[i], &measures[j], kernel))
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(values) {
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    g
}

/// `|| sum_j w_j Q_j - Q_i ||` for every `i`, from the Gram matrix.
fn distances_from_mixture(gram: &DMatrix<f64>, w: &DVector<f64>) -> Vec<f64> {
    let gw = gram * w;
    let wgw = w.dot(&gw);
    (0..w.len())
        .map(|i| (wgw - 2.0 * gw[i] + gram[(i, i)]).max(0.0).sqrt())
        .collect()
}

/// Mixture `sum_j w_j Q_j` as one discrete measure.
pub fn mix_measures(measures: &[DiscreteMeasure], weights: &[f64]) -> Result<DiscreteMeasure> {
    let mut atoms = Vec::new();
    let mut atom_weights = Vec::new();
    for (q, &w) in measures.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        for (a, v) in q.atoms().iter().zip(q.weights()) {
            atoms.push(a.clone());
            atom_weights.push(w * v);
        }
    }
    DiscreteMeasure::new(atoms, normalize_weights(&atom_weights)?)
}

/// Weiszfeld iterations for the RKHS geometric median of discrete measures.
pub fn weiszfeld_median(
    set: &SubsetPosteriorSet<DiscreteMeasure>,
    kernel: &RbfKernel,
    eps: f64,
) -> Result<MedianReport<DiscreteMeasure>> {
    weiszfeld_median_with_limit(set, kernel, eps, DEFAULT_WEISZFELD_MAX_ITERS)
}

pub fn weiszfeld_median_with_limit(
    set: &SubsetPosteriorSet<DiscreteMeasure>,
    kernel: &RbfKernel,
    eps: f64,
    max_iters: usize,
) -> Result<MedianReport<DiscreteMeasure>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {eps}")));
    }
    let measures = set.posteriors();
    let m = measures.len();
    let gram = embedding_gram(measures, kernel);
    let mut w = DVector::from_element(m, 1.0 / m as f64);
    let mut dist = distances_from_mixture(&gram, &w);
    let mut trace = vec![dist.iter().sum::<f64>()];
    let mut iterations = 0;

    let finish = |w: DVector<f64>, dist: Vec<f64>, trace: Vec<f64>, iterations: usize| {
        let weights: Vec<f64> = w.iter().cloned().collect();
        let result = mix_measures(measures, &weights)?;
        Ok(MedianReport {
            result,
            iterations,
            objective: dist.iter().sum(),
            distances: dist,
            weights,
            objective_trace: trace,
        })
    };

    while iterations < max_iters {
        if let Some(j) = dist.iter().position(|&d| d < WEISZFELD_SINGULAR_TOL) {
            // the iterate sits on input j; the median is that input
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            let dist = distances_from_mixture(&gram, &e);
            return finish(e, dist, trace, iterations);
        }
        let inv: Vec<f64> = dist.iter().map(|d| 1.0 / d).collect();
        let total: f64 = inv.iter().sum();
        let next = DVector::from_iterator(m, inv.iter().map(|v| v / total));
        let delta = &next - &w;
        let step = delta.dot(&(&gram * &delta)).max(0.0).sqrt();
        w = next;
        dist = distances_from_mixture(&gram, &w);
        trace.push(dist.iter().sum());
        iterations += 1;
        if step <= eps {
            break;
        }
    }
    finish(w, dist, trace, iterations)
}

// ---------------------------------------------------------------------------
// Metric median and rescaling

#[derive(Debug, Clone)]
pub struct MetricMedian<T> {
    /// Zero-based index of the selected input.
    pub index: usize,
    pub posterior: T,
    /// Radius of the smallest ball around `posterior` holding a strict majority.
    pub radius: f64,
    pub pairwise: DMatrix<f64>,
}

/// Input at the centre of the smallest ball that contains more than half of
/// the inputs. Ties go to the lowest index.
pub fn metric_median<T: SubsetPosterior>(set: &SubsetPosteriorSet<T>, kind: &DistanceKind) -> Result<MetricMedian<T>> {
    let posts = set.posteriors();
    let m = posts.len();
    if m == 0 {
        return Err(Error::EmptySet);
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| posts[i].distance(&posts[j], kind))
        .collect::<Result<Vec<f64>>>()?;
    let mut pairwise = DMatrix::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(values) {
        pairwise[(i, j)] = v;
        pairwise[(j, i)] = v;
    }
    // (m + 1) / 2 rounded up, as a one-based rank
    let rank = (m + 2) / 2;
    let mut best = (0, f64::INFINITY);
    for j in 0..m {
        let mut row: Vec<f64> = pairwise.row(j).iter().cloned().collect();
        row.sort_by(f64::total_cmp);
        let r = row[rank - 1];
        if r < best.1 {
            best = (j, r);
        }
    }
    Ok(MetricMedian {
        index: best.0,
        posterior: posts[best.0].clone(),
        radius: best.1,
        pairwise,
    })
}

/// Posteriors whose covariances can be rescaled.
pub trait CovarianceRescale: Sized {
    /// Multiplies every covariance by `factor > 0`.
    fn scale_covariance(&self, factor: f64) -> Result<Self>;
}

impl CovarianceRescale for GaussianDist {
    fn scale_covariance(&self, factor: f64) -> Result<Self> {
        GaussianDist::new(self.mean().clone(), self.cov() * factor)
    }
}

impl CovarianceRescale for GaussianMixture {
    fn scale_covariance(&self, factor: f64) -> Result<Self> {
        let comps = self
            .components()
            .iter()
            .map(|c| c.scale_covariance(factor))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(self.weights().to_vec(), comps)
    }
}

/// Divides every covariance by `sqrt(m)`.
pub fn covariance_rescale<T: CovarianceRescale>(posterior: &T, m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    posterior.scale_covariance(1.0 / (m as f64).sqrt())
}
