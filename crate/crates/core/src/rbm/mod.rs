//! Reduced basis method: Galerkin projection onto `blkdiag(V₁, V₁)`, error
//! estimators from a second basis for the error equation, and the greedy
//! offline phase.

mod basis;
mod estimate;
mod offline;
mod projection;

pub use basis::{ReducedBasis, ORTH_TOL};
pub use estimate::{
    error_residual_norm, error_residual_norm_sq_expanded, error_residual_terms, estimate_error, ErrorEstimate,
    EstimateDetail, Estimator,
};
pub(crate) use offline::check_deadline;
pub use offline::{
    argmax_allowed, offline_rbm, position_factor, sweep, sweep_sequential, undamped_factor, OfflineResult,
    OfflineStart, OfflineStep, RbmOptions, SweepEntry,
};
pub use projection::{project_reduced_model, ErrorModel, ReducedModel};
