use nalgebra::Vector2;

use super::TableGeometry;
use crate::{real, Real};

/// Reflects the puck off any wall line its disc crosses.
///
/// The position is mirrored about the wall offset by the puck radius and the
/// inward normal velocity is negated and scaled by the restitution. The right
/// wall is open across the goal mouth.
pub fn puck_wall_collision<T: Real>(
    mut p: Vector2<T>,
    mut v: Vector2<T>,
    table: &TableGeometry<T>,
) -> (Vector2<T>, Vector2<T>) {
    let r = table.puck_radius;
    let e = table.wall_restitution;
    let two = real::<T>(2.0);

    let lo_x = r;
    let hi_x = table.length - r;
    let lo_y = r;
    let hi_y = table.width - r;

    if p.x < lo_x {
        p.x = two * lo_x - p.x;
        if v.x < T::zero() {
            v.x = -v.x * e;
        }
    } else if p.x > hi_x && !table.in_goal_mouth(p.y) {
        p.x = two * hi_x - p.x;
        if v.x > T::zero() {
            v.x = -v.x * e;
        }
    }
    if p.y < lo_y {
        p.y = two * lo_y - p.y;
        if v.y < T::zero() {
            v.y = -v.y * e;
        }
    } else if p.y > hi_y {
        p.y = two * hi_y - p.y;
        if v.y > T::zero() {
            v.y = -v.y * e;
        }
    }
    (p, v)
}

/// Kinematic (infinite-mass) mallet against the puck.
///
/// On overlap the puck is pushed out to contact distance along the center
/// line; an approaching relative velocity is reflected elastically:
/// `v' = v - 2 ((v - v_m) . n) n`.
pub fn mallet_puck_collision<T: Real>(
    puck_p: Vector2<T>,
    puck_v: Vector2<T>,
    mallet_p: Vector2<T>,
    mallet_v: Vector2<T>,
    puck_radius: T,
    mallet_radius: T,
) -> (Vector2<T>, Vector2<T>) {
    let contact = puck_radius + mallet_radius;
    let delta = puck_p - mallet_p;
    let dist = delta.norm();
    if dist >= contact {
        return (puck_p, puck_v);
    }
    // coincident centers: push along +x
    let normal = if dist > T::zero() {
        delta / dist
    } else {
        Vector2::x()
    };
    let p = mallet_p + normal * contact;
    let approach = (puck_v - mallet_v).dot(&normal);
    let v = if approach < T::zero() {
        puck_v - normal * (real::<T>(2.0) * approach)
    } else {
        puck_v
    };
    (p, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_wall_reflection() {
        let table = TableGeometry::<f64>::default();
        let r = table.puck_radius;
        let p = Vector2::new(1.0, table.width - r + 0.01);
        let (p2, v2) = puck_wall_collision(p, Vector2::new(0.0, 1.0), &table);
        assert!((v2 - Vector2::new(0.0, -0.8)).amax() < 1e-15);
        assert!((p2.y - (table.width - r - 0.01)).abs() < 1e-12);
        assert_eq!(p2.x, 1.0);
    }

    #[test]
    fn left_wall_reflection() {
        let table = TableGeometry::<f64>::default();
        let (p, v) = puck_wall_collision(Vector2::new(0.01, 0.5), Vector2::new(-2.0, 0.3), &table);
        assert!((p.x - 0.05).abs() < 1e-15);
        assert!((v - Vector2::new(1.6, 0.3)).amax() < 1e-15);
    }

    #[test]
    fn interior_puck_untouched() {
        let table = TableGeometry::<f64>::default();
        let p = Vector2::new(1.0, 0.5);
        let v = Vector2::new(0.3, -0.2);
        assert_eq!(puck_wall_collision(p, v, &table), (p, v));
    }

    #[test]
    fn goal_mouth_is_open() {
        let table = TableGeometry::<f64>::default();
        let p = Vector2::new(table.length + 0.01, table.goal_center_y + 0.05);
        let v = Vector2::new(1.0, 0.0);
        assert_eq!(puck_wall_collision(p, v, &table), (p, v));
        // outside the mouth the right wall reflects
        let p = Vector2::new(table.length - 0.02, 0.1);
        let (_, v2) = puck_wall_collision(p, v, &table);
        assert!(v2.x < 0.0);
    }

    #[test]
    fn head_on_moving_mallet() {
        let (p, v) = mallet_puck_collision(
            Vector2::new(0.07, 0.0),
            Vector2::new(-1.0, 0.0),
            Vector2::zeros(),
            Vector2::new(0.5, 0.0),
            0.03,
            0.05,
        );
        assert!((v - Vector2::new(2.0, 0.0)).amax() < 1e-15);
        assert!((p - Vector2::new(0.08, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn separating_contact_keeps_velocity() {
        let v0 = Vector2::new(1.0, 0.0);
        let (_, v) = mallet_puck_collision(
            Vector2::new(0.07, 0.0),
            v0,
            Vector2::zeros(),
            Vector2::new(0.5, 0.0),
            0.03,
            0.05,
        );
        assert_eq!(v, v0);
    }

    #[test]
    fn no_overlap_no_change() {
        let p0 = Vector2::new(0.5, 0.5);
        let v0 = Vector2::new(-1.0, 0.0);
        let out =
            mallet_puck_collision(p0, v0, Vector2::zeros(), Vector2::new(1.0, 1.0), 0.03, 0.05);
        assert_eq!(out, (p0, v0));
    }
}
