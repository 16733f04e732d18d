//! Policies emit desired end-effector velocities in the table plane; the
//! harness converts them to joint velocities and filters them.

mod adversarial;
mod expert;
mod random;
mod remote;
pub mod wire;

use nalgebra::Vector2;

use crate::{Observation, Real, Result};

pub use adversarial::{adversarial_policy_action, AdversarialPolicy};
pub use expert::{scripted_expert_action, ExpertParams, ExpertPhase, ScriptedExpert};
pub use random::{random_policy_action, RandomPolicy};
pub use remote::{RemotePolicy, REMOTE_TIMEOUT};

/// Default bound on each end-effector velocity component (m/s).
pub const V_EE_MAX: f64 = 1.5;

pub trait Policy<T: Real>: Send {
    fn name(&self) -> &str;

    /// Starts a new episode. Built-in policies derive all randomness from `seed`.
    fn reset(&mut self, seed: u64) -> Result<()>;

    /// Desired end-effector velocity (m/s), each component within the
    /// policy's declared bound.
    fn act(&mut self, obs: &Observation<T>) -> Result<Vector2<T>>;
}

/// Always commands zero velocity.
#[derive(Debug, Clone, Default)]
pub struct ZeroPolicy;

impl<T: Real> Policy<T> for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn reset(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _obs: &Observation<T>) -> Result<Vector2<T>> {
        Ok(Vector2::zeros())
    }
}

/// Scales `v` down so its Euclidean norm is at most `limit`.
pub(crate) fn clamp_norm<T: Real>(v: Vector2<T>, limit: T) -> Vector2<T> {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}
