//! Control-affine dynamics `s' = f(s) + G(s) u` and the planar arm used by
//! the air-hockey world.

mod arm;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

pub use arm::{dls_inverse_kinematics, ArmModel, ChainPoints};

type DriftFn<T> = dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync;
type ControlMatrixFn<T> = dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync;

/// Time-integration rule used by [`ControlAffineSystem::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// `s' = f(s) + G(s) u` with box bounds on `u`.
#[derive(Clone)]
pub struct ControlAffineSystem<T: Real> {
    n: usize,
    m: usize,
    drift: Arc<DriftFn<T>>,
    control_matrix: Arc<ControlMatrixFn<T>>,
    u_min: DVector<T>,
    u_max: DVector<T>,
}

impl<T: Real> fmt::Debug for ControlAffineSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("u_min", &self.u_min.as_slice())
            .field("u_max", &self.u_max.as_slice())
            .finish_non_exhaustive()
    }
}

impl<T: Real> ControlAffineSystem<T> {
    pub fn new(
        n: usize,
        m: usize,
        drift: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        control_matrix: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
        u_min: DVector<T>,
        u_max: DVector<T>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::contract(
                "state and control dimensions must be positive",
            ));
        }
        if u_min.len() != m || u_max.len() != m {
            return Err(Error::contract(format!(
                "control bounds must have length {m}, got {} and {}",
                u_min.len(),
                u_max.len()
            )));
        }
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::contract("u_min < u_max must hold componentwise"));
        }
        Ok(Self {
            n,
            m,
            drift: Arc::new(drift),
            control_matrix: Arc::new(control_matrix),
            u_min,
            u_max,
        })
    }

    /// Joint-velocity plant: `f = 0`, `G = I`, bounds `+-qd_max`.
    pub fn velocity_integrator(n: usize, qd_max: &[T]) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("velocity integrator needs n >= 1"));
        }
        let qd_max = match qd_max.len() {
            1 => DVector::from_element(n, qd_max[0]),
            len if len == n => DVector::from_column_slice(qd_max),
            len => {
                return Err(Error::contract(format!(
                    "qd_max must have length 1 or {n}, got {len}"
                )))
            }
        };
        Self::new(
            n,
            n,
            move |_| DVector::zeros(n),
            move |_| DMatrix::identity(n, n),
            -qd_max.clone(),
            qd_max,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn u_min(&self) -> &DVector<T> {
        &self.u_min
    }

    pub fn u_max(&self) -> &DVector<T> {
        &self.u_max
    }

    pub fn drift(&self, s: &DVector<T>) -> Result<DVector<T>> {
        self.check_state(s)?;
        let f = (self.drift)(s);
        if f.len() != self.n {
            return Err(Error::contract(format!(
                "drift returned length {}, expected {}",
                f.len(),
                self.n
            )));
        }
        Ok(f)
    }

    pub fn control_matrix(&self, s: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_state(s)?;
        let g = (self.control_matrix)(s);
        if g.shape() != (self.n, self.m) {
            return Err(Error::contract(format!(
                "control matrix is {:?}, expected ({}, {})",
                g.shape(),
                self.n,
                self.m
            )));
        }
        Ok(g)
    }

    /// `f(s) + G(s) u`.
    pub fn velocity(&self, s: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.check_control(u)?;
        Ok(self.drift(s)? + self.control_matrix(s)? * u)
    }

    /// Clamps `u` into the control box.
    pub fn clamp_control(&self, u: &DVector<T>) -> DVector<T> {
        u.zip_zip_map(&self.u_min, &self.u_max, |x, lo, hi| x.clamp(lo, hi))
    }

    /// Scales `u` uniformly into the control box, keeping its direction when
    /// the box contains the origin. Falls back to [`Self::clamp_control`]
    /// otherwise.
    pub fn saturate_control(&self, u: &DVector<T>) -> DVector<T> {
        let mut scale = T::one();
        for i in 0..u.len() {
            let (x, lo, hi) = (u[i], self.u_min[i], self.u_max[i]);
            if lo > T::zero() || hi < T::zero() {
                return self.clamp_control(u);
            }
            if x > hi {
                scale = scale.min(hi / x);
            } else if x < lo {
                scale = scale.min(lo / x);
            }
        }
        self.clamp_control(&(u * scale))
    }

    /// Advances `s` by `dt` with `u` held constant over the step.
    pub fn step(
        &self,
        s: &DVector<T>,
        u: &DVector<T>,
        dt: T,
        method: Integrator,
    ) -> Result<DVector<T>> {
        if !(dt > T::zero()) {
            return Err(Error::contract("dt must be positive"));
        }
        self.check_state(s)?;
        self.check_control(u)?;
        let tol = crate::real::<T>(1e-9);
        let in_bounds = u
            .iter()
            .zip(self.u_min.iter().zip(self.u_max.iter()))
            .all(|(x, (lo, hi))| *x >= *lo - tol && *x <= *hi + tol);
        if !in_bounds {
            return Err(Error::contract("control outside [u_min, u_max]"));
        }

        match method {
            Integrator::Euler => Ok(s + self.velocity(s, u)? * dt),
            Integrator::Rk4 => {
                let half = dt * crate::real::<T>(0.5);
                let k1 = self.velocity(s, u)?;
                let k2 = self.velocity(&(s + &k1 * half), u)?;
                let k3 = self.velocity(&(s + &k2 * half), u)?;
                let k4 = self.velocity(&(s + &k3 * dt), u)?;
                let two = crate::real::<T>(2.0);
                let sixth = dt / crate::real::<T>(6.0);
                Ok(s + (k1 + k2 * two + k3 * two + k4) * sixth)
            }
        }
    }

    fn check_state(&self, s: &DVector<T>) -> Result<()> {
        if s.len() != self.n {
            return Err(Error::contract(format!(
                "state has length {}, expected {}",
                s.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_control(&self, u: &DVector<T>) -> Result<()> {
        if u.len() != self.m {
            return Err(Error::contract(format!(
                "control has length {}, expected {}",
                u.len(),
                self.m
            )));
        }
        Ok(())
    }
}

/// Joint-velocity plant with symmetric bounds `+-qd_max`.
pub fn make_velocity_integrator<T: Real>(n: usize, qd_max: T) -> Result<ControlAffineSystem<T>> {
    ControlAffineSystem::velocity_integrator(n, &[qd_max])
}
