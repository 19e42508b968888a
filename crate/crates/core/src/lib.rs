//! H2-optimal semi-active damping for second-order vibrational systems.
//!
//! The crate assembles a vibrational model `M x'' + D(g) x' + K x = B u`,
//! `y = C x`, transforms it to modal coordinates, and minimizes the squared
//! energy response `trace(C P11(g) Cᵀ)` over the damper gains `g`. The many
//! Lyapunov solves that this requires are accelerated by a reduced basis
//! method with an offline phase, an adaptive variant that enriches the basis
//! during the optimization, and error estimators built from a second basis
//! for the error equation.
//!
//! Module map:
//!
//! * [`model`]: system assembly, internal damping, modal transformation and
//!   the structured first-order operator `A(g) = Ã − U G(g) Uᵀ`.
//! * [`lyap`]: dense Bartels–Stewart solver and the structured low-rank sign
//!   function iteration.
//! * [`response`]: exact, reduced and frequency-quadrature energy responses.
//! * [`rbm`]: reduced bases, error estimators and the offline greedy phase.
//! * [`optimize`]: bounded Nelder–Mead, guarded reduced objective and the
//!   adaptive reduced basis driver.
//! * [`bench`]: the two benchmark families and campaign runner.
//!
//! Data-parallel sweeps (estimators over a test grid, campaign
//! configurations) run on rayon when the `parallel` feature is enabled and
//! fall back to sequential iteration otherwise. Results are identical either
//! way.

pub mod bench;
pub mod error;
pub mod linalg;
pub mod lyap;
pub mod model;
pub mod optimize;
pub mod par;
pub mod rbm;
pub mod response;

pub use error::{Error, Result};
