//! Dynamics of the Adam optimizer viewed through its vector field.
//!
//! The crate implements the Adam recursion together with the analytical
//! machinery that explains where it converges: the weighted sequence space of
//! past innovations on which the update map `g` is non-expansive, Monte Carlo
//! estimators for the Adam vector field `f` and its first-order approximation,
//! the companion ODE `dΨ = f(Ψ) dt` on the training-time grid, and desk-scale
//! rate experiments (error ∝ √γₙ, equilibrium bias ∝ 1/M, and the gap between
//! Adam equilibria and critical points of the objective).
//!
//! Everything is driven by counter-based seeded random streams, so every run
//! is replayable bit for bit and field evaluations at different parameter
//! values can share common random numbers.

pub mod adam;
pub mod error;
pub mod experiments;
pub mod field;
pub mod innovation;
pub mod ode;
pub mod rng;
pub mod schedule;
pub mod seq_space;
pub mod util;

pub use adam::{AdamState, RunConfig, StepRecord, Trajectory};
pub use error::{AdamFieldError, Result};
pub use field::FieldEstimate;
pub use innovation::{Innovation, UDist};
pub use schedule::StepSchedule;
pub use seq_space::{DampingParams, RhoWeights, WeightedSeq};
