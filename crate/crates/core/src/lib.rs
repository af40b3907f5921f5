//! Robust divide-and-conquer variational Bayes.
//!
//! The data are split into `m` groups, a variational posterior with the
//! likelihood raised to the power `m` is fitted on every group, and the `m`
//! subset posteriors are aggregated by a Wasserstein (or RKHS) median. The
//! median is insensitive to a minority of groups being contaminated by
//! outliers.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: PSD square roots, Cholesky, coordinatewise medians.
//! - [`distributions`]: Gaussian, Gaussian mixture and discrete measures;
//!   Bures-Wasserstein and MMD distances.
//! - [`partition`]: seeded random split into groups.
//! - [`lp`]: dense two-phase simplex.
//! - [`variational`]: powered conjugate posteriors, CAVI for Gaussian
//!   mixtures and LDA, reparameterised SVI for a full-covariance Gaussian.
//! - [`median`]: geometric, multi-marginal, Weiszfeld and metric medians.

pub mod distributions;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod median;
pub mod partition;
pub mod variational;

pub use distributions::{DiscreteMeasure, GaussianDist, GaussianMixture, RbfKernel};
pub use error::{Error, Result};
pub use median::{MedianReport, SubsetPosteriorSet};
pub use partition::{make_partition, PartitionPlan};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub struct ReadmeDoctests;
