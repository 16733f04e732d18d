//! Tangent-space safety filtering for control-affine systems.
//!
//! A nominal action from any policy is mapped onto the tangent space of the
//! slack-augmented constraint manifold `c(s, mu) = g(s) + sigma(mu) = 0`, with
//! drift compensation and an error-correction term, so that every commanded
//! transition keeps `g(s) <= 0`.
//!
//! The crate also ships a deterministic planar air-hockey world, a set of
//! reference policies and an experiment harness that measures per-trajectory
//! maximum constraint violation and success rate with the filter on and off.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the harness uses.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod dynamics;
mod error;
pub mod filter;
pub mod harness;
pub mod policies;
mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::{real, Real};

pub use constraints::{max_violation, ConstraintEvaluation, ConstraintSet};
pub use dynamics::{ArmModel, ControlAffineSystem, Integrator};
pub use filter::{
    FilterConfig, FilterDiagnostics, FilterOutput, SafetyFilter, SlackState, SlackUpdate,
};
pub use sim::{EpisodeConfig, Observation, TableGeometry, WorldState};

/// Double-precision control-affine system.
pub type System = dynamics::ControlAffineSystem<f64>;
/// Double-precision constraint set.
pub type Constraints = constraints::ConstraintSet<f64>;
/// Double-precision safety filter.
pub type Filter = filter::SafetyFilter<f64>;
/// Double-precision filter configuration.
pub type Config = filter::FilterConfig<f64>;
/// Double-precision planar arm.
pub type Arm = dynamics::ArmModel<f64>;
/// Double-precision table geometry.
pub type Table = sim::TableGeometry<f64>;
/// Double-precision world state.
pub type World = sim::WorldState<f64>;

/// Single-precision safety filter.
pub type FilterF32 = filter::SafetyFilter<f32>;
/// Single-precision control-affine system.
pub type SystemF32 = dynamics::ControlAffineSystem<f32>;
