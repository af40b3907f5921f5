use crate::lp::LpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix is indefinite (eigenvalue {eigenvalue:e})")]
    IndefiniteMatrix { eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid group count m={m} for n={n} (need 1 <= m <= n/2)")]
    InvalidGroupCount { n: usize, m: usize },

    #[error("group has no observations")]
    EmptyGroup,

    #[error("component {component} left its valid parameter range")]
    DegenerateComponent { component: usize },

    #[error("invalid variational state: {0}")]
    InvalidState(String),

    #[error("stochastic optimisation diverged at step {step}")]
    Diverged { step: usize },

    #[error("corpus has no tokens")]
    EmptyCorpus,

    #[error("empty posterior set")]
    EmptySet,

    #[error("cost tensor would have {entries} entries (limit {limit})")]
    TensorTooLarge { entries: u128, limit: usize },

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
