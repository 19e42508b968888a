//! Lyapunov solvers: dense Bartels–Stewart as a ground truth and the
//! structured sign-function iteration for low-rank Gramian factors.

mod dense;
mod factor;
mod residual;
mod sign;

pub use dense::{solve_dense, solve_dense_factored};
pub use factor::LowRankFactor;
pub use residual::lyapunov_residual;
pub use sign::{sign_solve, sign_solve_traced, SignIterationState, SignOptions, SignTrace};
