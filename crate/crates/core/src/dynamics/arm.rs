use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{real, Error, Real, Result};

/// Planar three-link arm; the end-effector carries the mallet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ArmModel<T: Real> {
    pub link_lengths: Vector3<T>,
    pub base_position: Vector2<T>,
    pub q_min: Vector3<T>,
    pub q_max: Vector3<T>,
    pub qd_max: T,
}

impl<T: Real> Default for ArmModel<T> {
    fn default() -> Self {
        Self {
            link_lengths: Vector3::new(real(0.5), real(0.4), real(0.3)),
            base_position: Vector2::new(real(-0.1), real(0.5)),
            q_min: Vector3::repeat(real(-2.9)),
            q_max: Vector3::repeat(real(2.9)),
            qd_max: real(2.0),
        }
    }
}

/// Base, elbow points and end-effector of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoints<T: Real> {
    pub base: Vector2<T>,
    pub p1: Vector2<T>,
    pub p2: Vector2<T>,
    pub ee: Vector2<T>,
}

impl<T: Real> ChainPoints<T> {
    /// Point `index` of the chain, 0 = base, 3 = end-effector.
    pub fn point(&self, index: usize) -> Vector2<T> {
        match index {
            0 => self.base,
            1 => self.p1,
            2 => self.p2,
            _ => self.ee,
        }
    }
}

impl<T: Real> ArmModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.iter().any(|l| !(*l > T::zero())) {
            return Err(Error::Config(
                "link lengths must be strictly positive".into(),
            ));
        }
        if self
            .q_min
            .iter()
            .zip(self.q_max.iter())
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::Config(
                "q_min < q_max must hold componentwise".into(),
            ));
        }
        if !(self.qd_max > T::zero()) {
            return Err(Error::Config("qd_max must be positive".into()));
        }
        Ok(())
    }

    /// Absolute link angles (cumulative joint sums).
    fn link_angles(q: &Vector3<T>) -> Vector3<T> {
        Vector3::new(q[0], q[0] + q[1], q[0] + q[1] + q[2])
    }

    pub fn forward_kinematics(&self, q: &Vector3<T>) -> ChainPoints<T> {
        let th = Self::link_angles(q);
        let mut pts = [self.base_position; 4];
        for k in 0..3 {
            let dir = Vector2::new(th[k].cos(), th[k].sin());
            pts[k + 1] = pts[k] + dir * self.link_lengths[k];
        }
        ChainPoints {
            base: pts[0],
            p1: pts[1],
            p2: pts[2],
            ee: pts[3],
        }
    }

    pub fn end_effector(&self, q: &Vector3<T>) -> Vector2<T> {
        self.forward_kinematics(q).ee
    }

    /// Jacobian of chain point `index` (1..=3) w.r.t. the joint angles.
    /// Columns for joints beyond the point are zero.
    pub fn point_jacobian(&self, q: &Vector3<T>, index: usize) -> Matrix2x3<T> {
        let th = Self::link_angles(q);
        let last = index.clamp(1, 3);
        let mut jac = Matrix2x3::zeros();
        for joint in 0..last {
            let mut col = Vector2::zeros();
            for link in joint..last {
                let l = self.link_lengths[link];
                col += Vector2::new(-th[link].sin(), th[link].cos()) * l;
            }
            jac.set_column(joint, &col);
        }
        jac
    }

    pub fn ee_jacobian(&self, q: &Vector3<T>) -> Matrix2x3<T> {
        self.point_jacobian(q, 3)
    }
}

/// Damped least squares: `J^T (J J^T + lambda^2 I)^-1 v`.
pub fn dls_inverse_kinematics<T: Real>(
    jac: &Matrix2x3<T>,
    v_ee: &Vector2<T>,
    lambda: T,
) -> Result<Vector3<T>> {
    if lambda < T::zero() {
        return Err(Error::contract("IK damping must be non-negative"));
    }
    let inner: Matrix2<T> = jac * jac.transpose() + Matrix2::identity() * (lambda * lambda);
    let inv = inner
        .try_inverse()
        .ok_or_else(|| Error::Singular("J J^T + lambda^2 I is singular; use lambda > 0".into()))?;
    Ok(jac.transpose() * (inv * v_ee))
}
