//! Likelihood-power-adjusted variational posteriors for a single group.
//!
//! Every fitter takes a `power` equal to the number of groups `m`; the group
//! likelihood enters the objective as `m * log p(X_group | theta)`, which is
//! the same as replicating each observation `m` times. Priors are never
//! scaled.

mod conjugate;
mod gmm;
mod lda;
mod svi;

pub use conjugate::{isotropic_noise, powered_gaussian_posterior};
pub use gmm::{
    cavi_gmm, gmm_posterior_predictive, predictive_precision, student_t_predictive, GmmPrior, GmmVariationalState,
    StudentTMixture,
};
pub use lda::{cavi_lda, sample_dirichlet_rows, LdaPrior, LdaVariationalState};
pub use svi::{
    elbo_estimate, elbo_gradient, fit_gaussian_svi, svi_full_gaussian, GaussianMeanModel, GaussianVariationalParams,
    LogJoint, StepSchedule, SviOptions, SviTrace,
};

/// Iteration controls shared by the coordinate-ascent fitters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviOptions {
    pub max_iters: usize,
    /// Stop once an iteration improves the ELBO by less than this.
    pub tol: f64,
}

impl Default for CaviOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
        }
    }
}
