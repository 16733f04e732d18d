use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::dls_inverse_kinematics;
use crate::policies::Policy;
use crate::sim::{check_success, observe, step_world};
use crate::{
    ArmModel, ConstraintSet, ControlAffineSystem, Error, Real, Result, SafetyFilter, TableGeometry,
    WorldState,
};

/// Everything an episode needs besides the policy, filter and initial world.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<T: Real> {
    pub arm: ArmModel<T>,
    pub table: TableGeometry<T>,
    pub constraints: ConstraintSet<T>,
    /// Joint-velocity plant; its bounds clamp the unfiltered baseline.
    pub plant: ControlAffineSystem<T>,
    pub dt: T,
    pub steps: usize,
    pub ik_damping: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub steps: usize,
    pub success: bool,
    /// Largest positive constraint value over the trajectory (natural units).
    pub max_violation: f64,
    /// Steps on which the filter had to clip its correction term.
    pub clipped_steps: usize,
    pub protocol_error: Option<String>,
}

/// One line of `traj-<seed>.jsonl`: the state after the step and the actions
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: [f64; 3],
    pub qd: [f64; 3],
    pub puck_p: [f64; 2],
    pub puck_v: [f64; 2],
    pub u_nom: [f64; 3],
    pub u_safe: [f64; 3],
    pub max_violation: f64,
    pub success_latched: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome<T: Real> {
    pub result: EpisodeResult,
    pub trajectory: Vec<StepRecord>,
    pub final_world: WorldState<T>,
}

fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn arr<T: Real, const N: usize>(v: &[T]) -> [f64; N] {
    std::array::from_fn(|i| to_f64(v[i]))
}

fn step_violation<T: Real>(constraints: &ConstraintSet<T>, q: &Vector3<T>) -> Result<T> {
    let ev = constraints.evaluate(&DVector::from_column_slice(q.as_slice()))?;
    Ok(constraints.violation(&ev.values))
}

/// Runs one episode: observe, act, inverse kinematics, filter (when given),
/// joint-velocity plant. Stops at the horizon or on a goal.
///
/// Policy and filter failures end the episode early and are reported in
/// `protocol_error`; the episode is never silently completed with made-up
/// actions.
pub fn run_episode<T: Real, P: Policy<T> + ?Sized>(
    setup: &EpisodeSetup<T>,
    policy: &mut P,
    mut filter: Option<&mut SafetyFilter<T>>,
    world0: WorldState<T>,
    record: bool,
) -> EpisodeOutcome<T> {
    let mut world = world0;
    let mut result = EpisodeResult {
        seed: setup.seed,
        steps: 0,
        success: false,
        max_violation: 0.0,
        clipped_steps: 0,
        protocol_error: None,
    };
    let mut trajectory = Vec::new();

    let mut run = || -> Result<()> {
        result.max_violation = to_f64(step_violation(&setup.constraints, &world.q)?);
        if let Some(f) = filter.as_deref_mut() {
            f.reset(&world.q_vector())?;
        }
        policy.reset(setup.seed)?;

        for _ in 0..setup.steps {
            let obs = observe(&world, &setup.arm);
            let v_ee = policy.act(&obs)?;
            if v_ee.iter().any(|x| !x.is_finite()) {
                return Err(Error::non_finite("policy action"));
            }
            let jac = setup.arm.ee_jacobian(&world.q);
            let u_nom = dls_inverse_kinematics(&jac, &v_ee, setup.ik_damping)?;
            let u_nom_d = DVector::from_column_slice(u_nom.as_slice());

            let u = match filter.as_deref_mut() {
                Some(f) => {
                    let out = f.filter_action(&world.q_vector(), &u_nom_d)?;
                    f.advance_slack(&out.mu_dot, setup.dt)?;
                    if out.diagnostics.correction_clipped {
                        result.clipped_steps += 1;
                    }
                    out.u_safe
                }
                None => setup.plant.saturate_control(&u_nom_d),
            };
            let u = Vector3::new(u[0], u[1], u[2]);

            world = step_world(&world, &u, setup.dt, &setup.arm, &setup.table);
            result.steps += 1;
            let viol = step_violation(&setup.constraints, &world.q)?;
            result.max_violation = result.max_violation.max(to_f64(viol));
            let success = check_success(&world, &setup.table);
            if record {
                trajectory.push(StepRecord {
                    t: to_f64(world.t),
                    q: arr(world.q.as_slice()),
                    qd: arr(world.qd.as_slice()),
                    puck_p: arr(world.puck_p.as_slice()),
                    puck_v: arr(world.puck_v.as_slice()),
                    u_nom: arr(u_nom.as_slice()),
                    u_safe: arr(u.as_slice()),
                    max_violation: to_f64(viol),
                    success_latched: success,
                });
            }
            if success {
                result.success = true;
                break;
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        result.protocol_error = Some(e.tag().to_string());
    }
    EpisodeOutcome {
        result,
        trajectory,
        final_world: world,
    }
}
