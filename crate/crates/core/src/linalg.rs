//! Dense symmetric linear algebra: PSD square roots, Cholesky factors,
//! log-determinants and coordinatewise medians.
//!
//! Tolerances are relative to the Frobenius norm of the input, floored at
//! [`ABS_FLOOR`] so that the zero matrix is handled.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues in `[-EIGEN_CLAMP_TOL * lambda_max, 0)` are clamped to zero.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;
pub const ABS_FLOOR: f64 = 1e-14;

fn scale_of(s: &DMatrix<f64>) -> f64 {
    s.norm().max(ABS_FLOOR)
}

/// Largest absolute entry of `S - S^T`.
pub fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_square(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch {
            expected: s.nrows(),
            found: s.ncols(),
        });
    }
    if s.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    check_square(s)?;
    let a = asymmetry(s);
    if !a.is_finite() || a > SYMMETRY_TOL * scale_of(s) {
        return Err(Error::NonSymmetric { asymmetry: a });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// `(S + S^T) / 2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues clamped at zero.
///
/// Fails if any eigenvalue is below `-EIGEN_CLAMP_TOL * lambda_max`.
fn psd_eigen(s: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_symmetric(s)?;
    let mut eig = SymmetricEigen::new(symmetrize(s));
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = -EIGEN_CLAMP_TOL * lambda_max.max(ABS_FLOOR);
    for v in eig.eigenvalues.iter_mut() {
        if *v < floor {
            return Err(Error::IndefiniteMatrix { eigenvalue: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Checks that `s` is symmetric positive semidefinite within tolerance.
pub fn check_psd(s: &DMatrix<f64>) -> Result<()> {
    psd_eigen(s).map(|_| ())
}

/// Principal square root of a symmetric PSD matrix.
pub fn sqrtm_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(s)?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(symmetrize(&r))
}

/// Lower-triangular Cholesky factor `L` with `L L^T = S`.
pub fn cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s).map_err(|e| match e {
        Error::NonSymmetric { .. } => Error::NotPositiveDefinite,
        other => other,
    })?;
    nalgebra::Cholesky::new(symmetrize(s))
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// `log det S` for symmetric positive definite `S`.
pub fn log_det_pd(s: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky(s)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn inverse_pd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s).map_err(|_| Error::NotPositiveDefinite)?;
    let chol = nalgebra::Cholesky::new(symmetrize(s)).ok_or(Error::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// Sample median; mean of the two middle order statistics for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Per-coordinate sample median of a list of equal-length vectors.
pub fn coordinatewise_median(vectors: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let dim = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let mut column = Vec::with_capacity(vectors.len());
    let mut out = DVector::zeros(dim);
    for d in 0..dim {
        column.clear();
        column.extend(vectors.iter().map(|v| v[d]));
        out[d] = median(&column)?;
    }
    Ok(out)
}
