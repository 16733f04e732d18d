use nalgebra::Vector2;

use super::{Policy, V_EE_MAX};
use crate::{real, Observation, Real, Result, TableGeometry};

/// Full-speed command toward the nearest table wall.
///
/// Ties are broken in the order top (+y), bottom (-y), right (+x), left (-x).
pub fn adversarial_policy_action<T: Real>(
    obs: &Observation<T>,
    table: &TableGeometry<T>,
    v_max: T,
) -> Vector2<T> {
    let p = obs.ee_p;
    let candidates = [
        (table.width - p.y, Vector2::new(T::zero(), T::one())),
        (p.y, Vector2::new(T::zero(), -T::one())),
        (table.length - p.x, Vector2::new(T::one(), T::zero())),
        (p.x, Vector2::new(-T::one(), T::zero())),
    ];
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.0 < best.0 {
            best = *c;
        }
    }
    best.1 * v_max
}

#[derive(Debug, Clone)]
pub struct AdversarialPolicy<T: Real> {
    table: TableGeometry<T>,
    v_max: T,
}

impl<T: Real> AdversarialPolicy<T> {
    pub fn new(table: TableGeometry<T>, v_max: T) -> Self {
        Self { table, v_max }
    }
}

impl<T: Real> Default for AdversarialPolicy<T> {
    fn default() -> Self {
        Self::new(TableGeometry::default(), real(V_EE_MAX))
    }
}

impl<T: Real> Policy<T> for AdversarialPolicy<T> {
    fn name(&self) -> &str {
        "adversarial"
    }

    fn reset(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation<T>) -> Result<Vector2<T>> {
        Ok(adversarial_policy_action(obs, &self.table, self.v_max))
    }
}
