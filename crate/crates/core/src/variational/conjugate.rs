use nalgebra::{DMatrix, DVector};

use crate::distributions::GaussianDist;
use crate::error::{Error, Result};
use crate::linalg;

/// `sigma2 * I` of dimension `dim`.
pub fn isotropic_noise(dim: usize, sigma2: f64) -> DMatrix<f64> {
    DMatrix::identity(dim, dim) * sigma2
}

/// Exact posterior of a Gaussian mean with known noise covariance when the
/// group likelihood is raised to the power `power`.
///
/// precision = prior precision + power * l * noise^-1, where `l` is the group
/// size; the mean follows from the usual conjugate update.
pub fn powered_gaussian_posterior(
    data: &[DVector<f64>],
    prior: &GaussianDist,
    noise_cov: &DMatrix<f64>,
    power: usize,
) -> Result<GaussianDist> {
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
    if noise_cov.nrows() != dim || noise_cov.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: noise_cov.nrows(),
        });
    }
    let prior_prec = linalg::inverse_pd(prior.cov()).map_err(|_| Error::SingularCovariance)?;
    let noise_prec = linalg::inverse_pd(noise_cov).map_err(|_| Error::SingularCovariance)?;
    let m = power as f64;
    let sum = data.iter().fold(DVector::zeros(dim), |acc, x| acc + x);
    let precision = &prior_prec + &noise_prec * (m * data.len() as f64);
    let cov = linalg::inverse_pd(&precision).map_err(|_| Error::SingularCovariance)?;
    let mean = &cov * (&prior_prec * prior.mean() + &noise_prec * sum * m);
    GaussianDist::new(mean, cov)
}
