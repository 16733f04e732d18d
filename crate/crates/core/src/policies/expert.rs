use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{clamp_norm, Policy, V_EE_MAX};
use crate::{real, Observation, Real, Result, TableGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct ExpertParams<T: Real> {
    /// Extra stand-off behind the puck when lining up (m).
    pub approach_offset: T,
    /// Distance to the hit point at which the strike starts (m).
    pub pos_tol: T,
    pub strike_speed: T,
    /// Proportional gain of the approach phase (1/s).
    pub approach_gain: T,
    pub v_ee_max: T,
}

impl<T: Real> Default for ExpertParams<T> {
    fn default() -> Self {
        Self {
            approach_offset: real(0.05),
            pos_tol: real(0.03),
            strike_speed: real(V_EE_MAX),
            approach_gain: real(5.0),
            v_ee_max: real(V_EE_MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpertPhase {
    #[default]
    Approach,
    Strike,
}

/// One step of the two-phase hitting law.
///
/// The hit point is `h = puck - d g` with `g` the unit vector from the puck
/// to the goal center and `d = r_mallet + r_puck + approach_offset`. The
/// approach phase servoes the mallet to `h`; once within `pos_tol` the strike
/// phase drives at `strike_speed` toward the contact position
/// `puck - (r_mallet + r_puck) g`, so the contact normal is `g` even when the
/// strike starts off the line. From `h` itself this is exactly `g`. The
/// strike ends when the mallet passes the puck, drifts off the line, or the
/// puck has left. Returns the command and the phase for the next step.
pub fn scripted_expert_action<T: Real>(
    obs: &Observation<T>,
    table: &TableGeometry<T>,
    params: &ExpertParams<T>,
    phase: ExpertPhase,
) -> (Vector2<T>, ExpertPhase) {
    let to_goal = table.goal_center() - obs.puck_p;
    let dir = if to_goal.norm() > T::default_epsilon() {
        to_goal.normalize()
    } else {
        Vector2::x()
    };
    let reach = table.mallet_radius + table.puck_radius + params.approach_offset;
    let hit_point = obs.puck_p - dir * reach;
    let to_hit = hit_point - obs.ee_p;

    let along = (obs.puck_p - obs.ee_p).dot(&dir);
    let lateral = to_hit - dir * to_hit.dot(&dir);

    let two = real::<T>(2.0);
    let phase = match phase {
        ExpertPhase::Approach if to_hit.norm() <= params.pos_tol => ExpertPhase::Strike,
        ExpertPhase::Strike
            if along < T::zero()
                || lateral.norm() > two * params.pos_tol
                || along > reach + two * params.approach_offset =>
        {
            ExpertPhase::Approach
        }
        other => other,
    };

    let v = match phase {
        ExpertPhase::Approach => to_hit * params.approach_gain,
        ExpertPhase::Strike => {
            let contact = obs.puck_p - dir * (table.mallet_radius + table.puck_radius);
            let aim = contact - obs.ee_p;
            let aim_dir = if aim.dot(&dir) > T::default_epsilon() {
                aim.normalize()
            } else {
                dir
            };
            aim_dir * params.strike_speed
        }
    };
    (clamp_norm(v, params.v_ee_max), phase)
}

/// Expert policy that does not know about the safety filter.
#[derive(Debug, Clone)]
pub struct ScriptedExpert<T: Real> {
    table: TableGeometry<T>,
    params: ExpertParams<T>,
    phase: ExpertPhase,
}

impl<T: Real> ScriptedExpert<T> {
    pub fn new(table: TableGeometry<T>, params: ExpertParams<T>) -> Self {
        Self {
            table,
            params,
            phase: ExpertPhase::Approach,
        }
    }

    pub fn phase(&self) -> ExpertPhase {
        self.phase
    }
}

impl<T: Real> Policy<T> for ScriptedExpert<T> {
    fn name(&self) -> &str {
        "scripted"
    }

    fn reset(&mut self, _seed: u64) -> Result<()> {
        self.phase = ExpertPhase::Approach;
        Ok(())
    }

    fn act(&mut self, obs: &Observation<T>) -> Result<Vector2<T>> {
        let (v, phase) = scripted_expert_action(obs, &self.table, &self.params, self.phase);
        self.phase = phase;
        Ok(v)
    }
}
