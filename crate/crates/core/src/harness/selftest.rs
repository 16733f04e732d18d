//! Quick invariant checks exposed through the `selftest` subcommand.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::finite_difference_jacobian;
use crate::filter::{augmented_jacobian, slack_map_derivative, tangent_projector, Gain};
use crate::sim::default_constraints;
use crate::{
    ArmModel, ConstraintSet, ControlAffineSystem, FilterConfig, SafetyFilter, TableGeometry,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn projector_annihilation(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (k, n, m) = (
            rng.random_range(1..8),
            rng.random_range(1..6),
            rng.random_range(1..5),
        );
        let jg = DMatrix::from_fn(k, n, |_, _| rng.random_range(-2.0..2.0));
        let g = DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0));
        let mu = DVector::from_fn(k, |_, _| rng.random_range(-1.5..1.5));
        let jc = augmented_jacobian(&jg, &g, &slack_map_derivative(&mu, 3.0)).unwrap();
        let w = DVector::from_fn(m + k, |i, _| if i < m { 1.0 } else { 100.0 });
        let p = tangent_projector(&jc, &w, 0.0).unwrap();
        worst = worst.max((&jc * p).amax());
    }
    Check {
        name: "projector annihilation",
        passed: worst <= 1e-9,
        detail: format!("max |J_c P| = {worst:.3e}"),
    }
}

fn worked_example() -> Check {
    let system = ControlAffineSystem::new(
        2,
        2,
        |_| DVector::zeros(2),
        |_| DMatrix::identity(2, 2),
        DVector::from_element(2, -10.0),
        DVector::from_element(2, 10.0),
    )
    .unwrap();
    let constraints = ConstraintSet::from_fn(2, vec!["s1".into()], |s: &DVector<f64>| {
        (
            DVector::from_element(1, s[0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
    });
    let config = FilterConfig {
        correction_gain: Gain::Uniform(1.0),
        beta: 1.0,
        slack_weight: 1.0,
        damping: 0.0,
        ..FilterConfig::default()
    };
    let mut filter = SafetyFilter::new(system, constraints, config).unwrap();
    let s = DVector::from_vec(vec![-std::f64::consts::LN_2, 0.0]);
    filter.reset(&s).unwrap();
    let out = filter
        .filter_action(&s, &DVector::from_vec(vec![1.0, 0.0]))
        .unwrap();
    let err = (out.u_safe[0] - 0.2)
        .abs()
        .max(out.u_safe[1].abs())
        .max((out.mu_dot[0] + 0.4).abs());
    Check {
        name: "worked filter example",
        passed: err <= 1e-10,
        detail: format!(
            "u_safe = {:?}, mu_dot = {:?}",
            out.u_safe.as_slice(),
            out.mu_dot.as_slice()
        ),
    }
}

fn jacobian_oracles(rng: &mut ChaCha8Rng) -> Check {
    let arm = ArmModel::<f64>::default();
    let set = default_constraints(&arm, &TableGeometry::default()).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = Vector3::from_fn(|_, _| rng.random_range(-2.9..2.9));
        let j = arm.ee_jacobian(&q);
        let fd = finite_difference_jacobian(
            |s: &DVector<f64>| {
                let p = arm.end_effector(&Vector3::new(s[0], s[1], s[2]));
                DVector::from_column_slice(p.as_slice())
            },
            &DVector::from_column_slice(q.as_slice()),
            1e-6,
        );
        worst = worst
            .max((DMatrix::from_column_slice(2, 3, j.as_slice()) - fd).amax() / j.amax().max(1.0));
        let qv = DVector::from_column_slice(q.as_slice());
        let ev = set.evaluate(&qv).unwrap();
        let fd = finite_difference_jacobian(|s| set.evaluate(s).unwrap().values, &qv, 1e-6);
        worst = worst.max((&ev.jacobian - fd).amax() / ev.jacobian.amax().max(1.0));
    }
    Check {
        name: "jacobian finite-difference oracle",
        passed: worst <= 1e-5,
        detail: format!("max relative error {worst:.3e}"),
    }
}

pub fn run_selftest() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    vec![
        worked_example(),
        projector_annihilation(&mut rng),
        jacobian_oracles(&mut rng),
    ]
}
