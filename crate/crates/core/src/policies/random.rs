use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, V_EE_MAX};
use crate::{real, Observation, Real, Result};

/// Decorrelates the policy stream from the world stream of the same seed.
const STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Each component uniform in `[-v_max, v_max]`.
pub fn random_policy_action<T: Real>(rng: &mut ChaCha8Rng, v_max: T) -> Vector2<T> {
    let mut draw = || {
        let u: f64 = rng.random_range(-1.0..=1.0);
        real::<T>(u) * v_max
    };
    let x = draw();
    let y = draw();
    Vector2::new(x, y)
}

#[derive(Debug, Clone)]
pub struct RandomPolicy<T: Real> {
    rng: ChaCha8Rng,
    v_max: T,
}

impl<T: Real> RandomPolicy<T> {
    pub fn new(v_max: T) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(STREAM_SALT),
            v_max,
        }
    }
}

impl<T: Real> Default for RandomPolicy<T> {
    fn default() -> Self {
        Self::new(real(V_EE_MAX))
    }
}

impl<T: Real> Policy<T> for RandomPolicy<T> {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ STREAM_SALT);
        Ok(())
    }

    fn act(&mut self, _obs: &Observation<T>) -> Result<Vector2<T>> {
        Ok(random_policy_action(&mut self.rng, self.v_max))
    }
}
