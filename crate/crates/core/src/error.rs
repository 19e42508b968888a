use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} is not symmetric")]
    NotSymmetric { name: &'static str },

    #[error("{name} is not positive definite")]
    NotPositiveDefinite { name: &'static str },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge (mode {mode})")]
    EigenFailure { mode: usize },

    #[error("operator is not asymptotically stable (eigenvalue with real part {real_part:e})")]
    Unstable { real_part: f64 },

    #[error("dimension {dim} exceeds dense cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("sign iteration broke down at iteration {iteration}: singular capacitance matrix")]
    Breakdown { iteration: usize },

    #[error("sign iteration produced non-finite values at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("reduced operator is unstable at g = {g:?}")]
    ReducedUnstable { g: Vec<f64> },

    #[error("quadrature error estimate {estimate:e} above target {target:e}")]
    QuadratureAccuracy { estimate: f64, target: f64 },

    #[error("reduced basis is empty")]
    EmptyBasis,

    #[error("offline phase did not converge: {0}")]
    OfflineNoConvergence(String),

    #[error("time budget exhausted")]
    Deadline,

    #[error("objective is infinite at every vertex of the initial simplex")]
    StartFailure,

    #[error("benchmark generation failed: {0}")]
    Generation(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
