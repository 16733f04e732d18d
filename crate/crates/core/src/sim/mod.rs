//! Planar air-hockey world: an arm-driven mallet, a damped puck with wall
//! and mallet contacts, and goal detection.

mod contact;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{box_constraints, point_in_rectangle_constraints, Rect};
use crate::{real, ArmModel, ConstraintSet, Error, Real, Result};

pub use contact::{mallet_puck_collision, puck_wall_collision};

/// Clearance required of every constraint at the home configuration.
pub const HOME_CLEARANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct TableGeometry<T: Real> {
    /// Extent along x; the goal is on the right wall `x = length`.
    pub length: T,
    pub width: T,
    pub goal_center_y: T,
    pub goal_half_width: T,
    pub wall_restitution: T,
    pub puck_radius: T,
    pub mallet_radius: T,
    /// Viscous puck damping (1/s).
    pub puck_damping: T,
    /// Speed cap guarding against tunneling.
    pub max_puck_speed: T,
    /// How far the elbow points may leave the table rectangle.
    pub link_clearance: T,
}

impl<T: Real> Default for TableGeometry<T> {
    fn default() -> Self {
        Self {
            length: real(2.0),
            width: real(1.0),
            goal_center_y: real(0.5),
            goal_half_width: real(0.125),
            wall_restitution: real(0.8),
            puck_radius: real(0.03),
            mallet_radius: real(0.05),
            puck_damping: real(0.3),
            max_puck_speed: real(5.0),
            link_clearance: real(0.1),
        }
    }
}

impl<T: Real> TableGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x > T::zero();
        if !(pos(self.length) && pos(self.width)) {
            return Err(Error::Config("table extents must be positive".into()));
        }
        if !(pos(self.puck_radius) && pos(self.mallet_radius)) {
            return Err(Error::Config(
                "puck and mallet radii must be positive".into(),
            ));
        }
        if !(pos(self.wall_restitution) && self.wall_restitution <= T::one()) {
            return Err(Error::Config("restitution must lie in (0, 1]".into()));
        }
        if !(pos(self.goal_half_width)
            && self.goal_center_y - self.goal_half_width >= T::zero()
            && self.goal_center_y + self.goal_half_width <= self.width)
        {
            return Err(Error::Config(
                "goal span must lie within the table width".into(),
            ));
        }
        if self.puck_damping < T::zero() || !pos(self.max_puck_speed) {
            return Err(Error::Config(
                "damping must be >= 0 and speed cap > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn playing_field(&self) -> Rect<T> {
        Rect::new(T::zero(), self.length, T::zero(), self.width)
    }

    pub fn goal_center(&self) -> Vector2<T> {
        Vector2::new(self.length, self.goal_center_y)
    }

    pub fn in_goal_mouth(&self, y: T) -> bool {
        (y - self.goal_center_y).abs() <= self.goal_half_width
    }
}

/// Per-episode settings of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct EpisodeConfig<T: Real> {
    pub horizon: T,
    pub dt: T,
    pub puck_init_box: Rect<T>,
    /// `[min, max]` initial puck speed (m/s).
    pub puck_init_speed_range: [T; 2],
    pub seed: u64,
    pub home_q: Vector3<T>,
}

impl<T: Real> Default for EpisodeConfig<T> {
    fn default() -> Self {
        Self {
            horizon: real(5.0),
            dt: real(0.02),
            puck_init_box: Rect::new(real(0.7), real(0.95), real(0.3), real(0.7)),
            puck_init_speed_range: [T::zero(), real(0.1)],
            seed: 0,
            home_q: Vector3::new(real(1.2), real(-2.4), real(1.0)),
        }
    }
}

impl<T: Real> EpisodeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero() && self.dt > T::zero()) {
            return Err(Error::Config("horizon and dt must be positive".into()));
        }
        let b = &self.puck_init_box;
        if !(b.x_lo <= b.x_hi && b.y_lo <= b.y_hi) {
            return Err(Error::Config("puck init box is inverted".into()));
        }
        let [lo, hi] = self.puck_init_speed_range;
        if !(lo >= T::zero() && lo <= hi) {
            return Err(Error::Config(
                "puck speed range must satisfy 0 <= min <= max".into(),
            ));
        }
        Ok(())
    }

    /// Number of control steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt)
            .round()
            .to_usize()
            .unwrap_or(0)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState<T: Real> {
    pub q: Vector3<T>,
    pub qd: Vector3<T>,
    pub puck_p: Vector2<T>,
    pub puck_v: Vector2<T>,
    pub t: T,
    /// Latched once the puck has entered the goal.
    pub goal_scored: bool,
    pub rng: ChaCha8Rng,
}

impl<T: Real> WorldState<T> {
    pub fn q_vector(&self) -> DVector<T> {
        DVector::from_column_slice(self.q.as_slice())
    }
}

/// What a policy sees: joint positions and velocities, puck position and
/// velocity, plus the mallet pose as a convenience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Observation<T: Real> {
    pub q: Vector3<T>,
    pub qd: Vector3<T>,
    pub puck_p: Vector2<T>,
    pub puck_v: Vector2<T>,
    pub ee_p: Vector2<T>,
    pub ee_v: Vector2<T>,
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * real::<T>(u)
}

/// Fresh world for one episode: arm at home and at rest, puck drawn from the
/// seeded generator.
pub fn reset_episode<T: Real>(
    cfg: &EpisodeConfig<T>,
    arm: &ArmModel<T>,
    table: &TableGeometry<T>,
) -> Result<WorldState<T>> {
    cfg.validate()?;
    arm.validate()?;
    table.validate()?;
    check_home(&cfg.home_q, arm, table)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = cfg.puck_init_box;
    let x = uniform(&mut rng, b.x_lo, b.x_hi);
    let y = uniform(&mut rng, b.y_lo, b.y_hi);
    let heading = uniform(&mut rng, T::zero(), T::two_pi());
    let speed = uniform(
        &mut rng,
        cfg.puck_init_speed_range[0],
        cfg.puck_init_speed_range[1],
    );

    Ok(WorldState {
        q: cfg.home_q,
        qd: Vector3::zeros(),
        puck_p: Vector2::new(x, y),
        puck_v: Vector2::new(heading.cos(), heading.sin()) * speed,
        t: T::zero(),
        goal_scored: false,
        rng,
    })
}

/// Fails unless every default constraint is at most `-HOME_CLEARANCE` at `q`.
pub fn check_home<T: Real>(
    q: &Vector3<T>,
    arm: &ArmModel<T>,
    table: &TableGeometry<T>,
) -> Result<()> {
    let set = default_constraints(arm, table)?;
    let ev = set.evaluate(&DVector::from_column_slice(q.as_slice()))?;
    let limit = -real::<T>(HOME_CLEARANCE);
    if let Some((i, v)) = ev.values.iter().enumerate().find(|(_, v)| **v > limit) {
        return Err(Error::Config(format!(
            "home configuration is not strictly safe: {} = {v}",
            set.labels()[i]
        )));
    }
    Ok(())
}

/// Advances the world by `dt` under joint velocity command `u_joint`.
///
/// Order: arm integration, puck damping and drift, mallet contact, speed cap,
/// wall contact, goal latch.
pub fn step_world<T: Real>(
    world: &WorldState<T>,
    u_joint: &Vector3<T>,
    dt: T,
    arm: &ArmModel<T>,
    table: &TableGeometry<T>,
) -> WorldState<T> {
    let mut next = world.clone();
    next.q = world.q + u_joint * dt;
    next.qd = *u_joint;

    let mallet_p = arm.end_effector(&next.q);
    let mallet_v = arm.ee_jacobian(&next.q) * next.qd;

    // exact solution of v' = -c v over the step
    let c = table.puck_damping;
    let decay = (-c * dt).exp();
    let travel = if c > T::zero() {
        (T::one() - decay) / c
    } else {
        dt
    };
    let mut p = world.puck_p + world.puck_v * travel;
    let mut v = world.puck_v * decay;

    (p, v) = mallet_puck_collision(
        p,
        v,
        mallet_p,
        mallet_v,
        table.puck_radius,
        table.mallet_radius,
    );
    let speed = v.norm();
    if speed > table.max_puck_speed {
        v *= table.max_puck_speed / speed;
    }
    (p, v) = puck_wall_collision(p, v, table);

    next.puck_p = p;
    next.puck_v = v;
    next.t = world.t + dt;
    next.goal_scored = world.goal_scored || puck_in_goal(&p, table);
    next
}

fn puck_in_goal<T: Real>(p: &Vector2<T>, table: &TableGeometry<T>) -> bool {
    p.x > table.length && table.in_goal_mouth(p.y)
}

/// True once the puck center has crossed the goal line inside the mouth.
pub fn check_success<T: Real>(world: &WorldState<T>, table: &TableGeometry<T>) -> bool {
    world.goal_scored || puck_in_goal(&world.puck_p, table)
}

pub fn observe<T: Real>(world: &WorldState<T>, arm: &ArmModel<T>) -> Observation<T> {
    Observation {
        q: world.q,
        qd: world.qd,
        puck_p: world.puck_p,
        puck_v: world.puck_v,
        ee_p: arm.end_effector(&world.q),
        ee_v: arm.ee_jacobian(&world.q) * world.qd,
    }
}

fn chain_point_map<T: Real>(
    arm: &ArmModel<T>,
    index: usize,
) -> impl Fn(&DVector<T>) -> (Vector2<T>, DMatrix<T>) + Send + Sync + 'static {
    let arm = arm.clone();
    move |s: &DVector<T>| {
        let q = Vector3::new(s[0], s[1], s[2]);
        let p = arm.forward_kinematics(&q).point(index);
        let j = arm.point_jacobian(&q, index);
        (p, DMatrix::from_column_slice(2, 3, j.as_slice()))
    }
}

/// The 18 task constraints over `q`, in order: end-effector inside the
/// playing field shrunk by the mallet radius (4), elbow points `p1`, `p2`
/// inside the table expanded by the link clearance (8), joint limits (6).
pub fn default_constraints<T: Real>(
    arm: &ArmModel<T>,
    table: &TableGeometry<T>,
) -> Result<ConstraintSet<T>> {
    let field = table.playing_field();
    let ee =
        point_in_rectangle_constraints(3, chain_point_map(arm, 3), field, table.mallet_radius)?
            .named("ee");
    let p1 =
        point_in_rectangle_constraints(3, chain_point_map(arm, 1), field, -table.link_clearance)?
            .named("p1");
    let p2 =
        point_in_rectangle_constraints(3, chain_point_map(arm, 2), field, -table.link_clearance)?
            .named("p2");
    let lo = DVector::from_column_slice(arm.q_min.as_slice());
    let hi = DVector::from_column_slice(arm.q_max.as_slice());
    let joints = box_constraints(&lo, &hi, &[0, 1, 2])?.named("q");
    ee.stack(p1)?.stack(p2)?.stack(joints)
}
