//! Construction and validation of (time-varying, possibly nonsmooth) barrier
//! functions certifying safety of differential inclusions `ẋ ∈ F(x)`.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: state-space sets, distances, tangent cones and nonsmooth
//!   differentials.
//! - [`dynamics`]: set-valued right-hand sides, selections and the built-in
//!   systems.
//! - [`solver`]: fixed-step and adaptive trajectory integration.
//! - [`reachability`]: sampled reach tubes, the Filippov bound and regularity
//!   probes.
//! - [`barrier`]: the marginal barrier `B(t,x) = inf { |y|_{X_o} : y ∈ R(-t,x) }`,
//!   the closed-form counterexample barrier and every barrier-validity check.
//! - [`smoothing`]: time partitions, cubic blending, partition-of-unity gluing
//!   and the smooth converse barrier pipeline.
//! - [`verify`]: end-to-end safety verdicts by simulation, Nagumo-type cone
//!   conditions and conditional invariance.
//!
//! All numerical evidence produced here is one-sided: reach clouds are finite
//! under-approximations and checks run on finite samples.

pub mod barrier;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod reachability;
pub mod smoothing;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

/// A point of the state space.
pub type StateVector = nalgebra::DVector<f64>;

/// Builds a [`StateVector`] from a slice.
pub fn state(xs: &[f64]) -> StateVector {
    StateVector::from_column_slice(xs)
}
