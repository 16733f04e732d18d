use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangent_shield::constraints::{box_constraints, finite_difference_jacobian};
use tangent_shield::dynamics::{dls_inverse_kinematics, make_velocity_integrator};
use tangent_shield::filter::{
    augmented_jacobian, closed_loop_residual, slack_map_derivative, tangent_projector, Gain,
};
use tangent_shield::sim::default_constraints;
use tangent_shield::{
    max_violation, Arm, ConstraintSet, ControlAffineSystem, FilterConfig, SafetyFilter, SlackState,
    Table,
};

/// A random linear instance: `g(s) = J_g s + b`, constant drift `f` and input
/// matrix `G`, and slack `mu` off the manifold by construction.
#[derive(Debug, Clone)]
struct Instance {
    jg: DMatrix<f64>,
    g: DMatrix<f64>,
    f: DVector<f64>,
    b: DVector<f64>,
    mu: DVector<f64>,
    s: DVector<f64>,
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn vector(len: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(range, len).prop_map(DVector::from_vec)
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..7, 1usize..6, 1usize..5).prop_flat_map(|(k, n, m)| sized_instance(k, n, m))
}

/// Instances with more controls than constraints, so `J_g G` has a null space.
fn wide_instance() -> impl Strategy<Value = Instance> {
    (1usize..4, 1usize..6)
        .prop_flat_map(|(k, n)| (Just(k), Just(n), k + 1..6))
        .prop_flat_map(|(k, n, m)| sized_instance(k, n, m))
}

fn sized_instance(k: usize, n: usize, m: usize) -> impl Strategy<Value = Instance> {
    (
        matrix(k, n),
        matrix(n, m),
        vector(n, -1.0..1.0),
        vector(k, -1.0..0.0),
        vector(k, -1.5..1.5),
        vector(n, -1.0..1.0),
    )
        .prop_map(|(jg, g, f, b, mu, s)| Instance { jg, g, f, b, mu, s })
}

fn filter_for(inst: &Instance, damping: f64) -> SafetyFilter<f64> {
    let (n, m) = inst.g.shape();
    let (f, g) = (inst.f.clone(), inst.g.clone());
    let system = ControlAffineSystem::new(
        n,
        m,
        move |_| f.clone(),
        move |_| g.clone(),
        DVector::from_element(m, -1e6),
        DVector::from_element(m, 1e6),
    )
    .unwrap();
    let (jg, b) = (inst.jg.clone(), inst.b.clone());
    let labels = (0..jg.nrows()).map(|i| format!("g{i}")).collect();
    let constraints = ConstraintSet::from_fn(n, labels, move |s: &DVector<f64>| {
        (&jg * s + &b, jg.clone())
    });
    let config = FilterConfig {
        damping,
        ..FilterConfig::default()
    };
    let mut filter = SafetyFilter::new(system, constraints, config).unwrap();
    filter
        .set_slack(SlackState {
            mu: inst.mu.clone(),
        })
        .unwrap();
    filter
}

fn weights(m: usize, k: usize) -> DVector<f64> {
    DVector::from_fn(m + k, |i, _| if i < m { 1.0 } else { 100.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projector_annihilates_the_manifold_jacobian(inst in instance()) {
        let (k, m) = (inst.jg.nrows(), inst.g.ncols());
        let jc = augmented_jacobian(&inst.jg, &inst.g, &slack_map_derivative(&inst.mu, 3.0)).unwrap();
        let p = tangent_projector(&jc, &weights(m, k), 0.0).unwrap();
        prop_assert!((&jc * p).amax() <= 1e-9);
    }

    #[test]
    fn unclipped_output_decays_the_residual(inst in instance(), u in vector(4, -3.0..3.0)) {
        let m = inst.g.ncols();
        let mut filter = filter_for(&inst, 0.0);
        let u_nom = u.rows(0, m).into_owned();
        let out = filter.filter_action(&inst.s, &u_nom).unwrap();
        prop_assume!(!out.diagnostics.correction_clipped);
        let r = closed_loop_residual(&filter, &inst.s, &out).unwrap();
        prop_assert!(r.amax() <= 1e-8, "residual {}", r.amax());
    }

    #[test]
    fn output_is_affine_in_the_nominal_action(
        inst in instance(),
        a in vector(4, -3.0..3.0),
        b in vector(4, -3.0..3.0),
    ) {
        let m = inst.g.ncols();
        let mut filter = filter_for(&inst, 1e-6);
        let (a, b) = (a.rows(0, m).into_owned(), b.rows(0, m).into_owned());
        let mid = (&a + &b) * 0.5;
        let oa = filter.filter_action(&inst.s, &a).unwrap();
        let ob = filter.filter_action(&inst.s, &b).unwrap();
        let om = filter.filter_action(&inst.s, &mid).unwrap();
        let all_unscaled = [&oa, &ob, &om].iter().all(|o| o.diagnostics.tangent_scale == 1.0);
        prop_assume!(all_unscaled);
        let expect = (oa.stacked() + ob.stacked()) * 0.5;
        prop_assert!((om.stacked() - expect).amax() <= 1e-10);
    }

    #[test]
    fn tangent_actions_pass_through(inst in wide_instance(), z in vector(5, -1.0..1.0)) {
        let (k, n, m) = (inst.jg.nrows(), inst.jg.ncols(), inst.g.ncols());
        // zero drift, strictly safe state, slack exactly on the manifold
        let b = &inst.b - &inst.jg * &inst.s - DVector::from_element(k, 0.01);
        let inst = Instance { f: DVector::zeros(n), b, ..inst };
        let mut filter = filter_for(&inst, 0.0);
        filter.reset(&inst.s).unwrap();
        prop_assert!(filter.manifold_residual(&inst.s).unwrap().amax() <= 1e-12);
        // project z onto the null space of J_g G
        let a = &inst.jg * &inst.g;
        let z = z.rows(0, m).into_owned();
        let svd = a.clone().svd(true, true);
        let v_t = svd.v_t.unwrap();
        let mut u = z.clone();
        for (i, sv) in svd.singular_values.iter().enumerate() {
            if *sv > 1e-9 {
                let row = v_t.row(i).transpose();
                u -= &row * row.dot(&z);
            }
        }
        prop_assume!(u.norm() > 1e-3 && (&a * &u).amax() <= 1e-12);
        let out = filter.filter_action(&inst.s, &u).unwrap();
        prop_assert_eq!(out.diagnostics.tangent_scale, 1.0);
        prop_assert!((&out.u_safe - &u).amax() <= 1e-10);
        prop_assert!(out.mu_dot.amax() <= 1e-10);
        prop_assert_eq!(out.mu_dot.len(), k);
    }

    #[test]
    fn identical_inputs_give_identical_outputs(inst in instance(), u in vector(4, -3.0..3.0)) {
        let m = inst.g.ncols();
        let u = u.rows(0, m).into_owned();
        let a = filter_for(&inst, 1e-6).filter_action(&inst.s, &u).unwrap();
        let b = filter_for(&inst, 1e-6).filter_action(&inst.s, &u).unwrap();
        let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.stacked()), bits(&b.stacked()));
    }

    #[test]
    fn dls_rate_is_bounded_by_damping(
        j in prop::collection::vec(-2.0..2.0f64, 6),
        v in prop::collection::vec(-2.0..2.0f64, 2),
        lambda in 0.01..1.0f64,
    ) {
        let j = Matrix2x3::from_column_slice(&j);
        let v = Vector2::from_column_slice(&v);
        let u = dls_inverse_kinematics(&j, &v, lambda).unwrap();
        prop_assert!(u.norm() <= v.norm() / (2.0 * lambda) * (1.0 + 1e-12));
    }

    #[test]
    fn max_violation_is_monotone(values in prop::collection::vec(-1.0..1.0f64, 1..12), bump in 0.0..1.0f64, idx in any::<prop::sample::Index>()) {
        let before = max_violation(&values);
        let mut raised = values.clone();
        let i = idx.index(raised.len());
        raised[i] += bump;
        prop_assert!(max_violation(&raised) >= before);
        prop_assert!(before >= 0.0);
    }

    #[test]
    fn stacking_concatenates_rows(s in vector(3, -2.0..2.0)) {
        let lo = DVector::from_element(3, -1.0);
        let hi = DVector::from_element(3, 1.0);
        let a = box_constraints(&lo, &hi, &[0, 2]).unwrap().named("a");
        let b = box_constraints(&(lo * 2.0), &(hi * 2.0), &[1]).unwrap().named("b");
        let (ea, eb) = (a.evaluate(&s).unwrap(), b.evaluate(&s).unwrap());
        let stacked = a.stack(b).unwrap();
        let e = stacked.evaluate(&s).unwrap();
        prop_assert_eq!(e.values.rows(0, 4).into_owned(), ea.values);
        prop_assert_eq!(e.values.rows(4, 2).into_owned(), eb.values);
        prop_assert_eq!(e.jacobian.rows(0, 4).into_owned(), ea.jacobian);
        prop_assert_eq!(e.jacobian.rows(4, 2).into_owned(), eb.jacobian);
        prop_assert_eq!(stacked.labels(), vec!["a.upper[0]", "a.lower[0]", "a.upper[2]", "a.lower[2]", "b.upper[1]", "b.lower[1]"]);
    }
}

fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / analytic.amax().max(1.0)
}

#[test]
fn jacobians_match_central_differences() {
    let arm = Arm::default();
    let set = default_constraints(&arm, &Table::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let q = Vector3::from_fn(|_, _| rng.random_range(-2.9..2.9));
        let qv = DVector::from_column_slice(q.as_slice());
        let ee = |s: &DVector<f64>| {
            DVector::from_column_slice(arm.end_effector(&Vector3::new(s[0], s[1], s[2])).as_slice())
        };
        let j = DMatrix::from_column_slice(2, 3, arm.ee_jacobian(&q).as_slice());
        assert!(relative_error(&j, &finite_difference_jacobian(ee, &qv, 1e-6)) <= 1e-5);

        let ev = set.evaluate(&qv).unwrap();
        let fd = finite_difference_jacobian(|s| set.evaluate(s).unwrap().values, &qv, 1e-6);
        assert!(relative_error(&ev.jacobian, &fd) <= 1e-5);
    }
}

#[test]
fn random_joint_actions_from_safe_starts_stay_safe() {
    let arm = Arm::default();
    let set = default_constraints(&arm, &Table::default()).unwrap();
    let dt = 0.02;
    let config = FilterConfig {
        step_horizon: Some(dt),
        ..FilterConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut q = loop {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-2.9..2.9));
            if set.evaluate(&q).unwrap().values.max() <= -0.01 {
                break q;
            }
        };
        let plant = make_velocity_integrator(3, 2.0).unwrap();
        let mut filter = SafetyFilter::new(plant, set.clone(), config.clone()).unwrap();
        filter.reset(&q).unwrap();
        for _ in 0..250 {
            let u_nom = DVector::from_fn(3, |_, _| if rng.random::<bool>() { 2.0 } else { -2.0 });
            let out = filter.filter_action(&q, &u_nom).unwrap();
            filter.advance_slack(&out.mu_dot, dt).unwrap();
            q += out.u_safe * dt;
            worst = worst.max(max_violation(set.evaluate(&q).unwrap().values.as_slice()));
        }
    }
    assert!(worst <= 1e-3, "max violation {worst}");
}

#[test]
fn uniform_gain_equals_per_row_gain() {
    let inst = Instance {
        jg: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 1.0]),
        g: DMatrix::identity(2, 2),
        f: DVector::from_vec(vec![0.1, -0.2]),
        b: DVector::from_vec(vec![-0.4, -0.1]),
        mu: DVector::from_vec(vec![0.2, -0.7]),
        s: DVector::from_vec(vec![0.3, 0.1]),
    };
    let u = DVector::from_vec(vec![0.5, -1.0]);
    let a = filter_for(&inst, 0.0).filter_action(&inst.s, &u).unwrap();
    let mut per_row = filter_for(&inst, 0.0);
    let mut config = per_row.config().clone();
    config.correction_gain = Gain::PerConstraint(vec![10.0, 10.0]);
    per_row = SafetyFilter::new(
        per_row.system().clone(),
        per_row.constraints().clone(),
        config,
    )
    .unwrap();
    per_row
        .set_slack(SlackState {
            mu: inst.mu.clone(),
        })
        .unwrap();
    let b = per_row.filter_action(&inst.s, &u).unwrap();
    assert_eq!(a.stacked(), b.stacked());
}
