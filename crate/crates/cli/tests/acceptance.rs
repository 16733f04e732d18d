//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangent_shield::constraints::finite_difference_jacobian;
use tangent_shield::dynamics::make_velocity_integrator;
use tangent_shield::filter::{
    augmented_jacobian, closed_loop_residual, slack_map_derivative, tangent_projector, Gain,
};
use tangent_shield::harness::{run_experiment_episodes, ExperimentConfig, PolicySpec, Safety};
use tangent_shield::sim::default_constraints;
use tangent_shield::{
    Arm, ConstraintSet, ControlAffineSystem, FilterConfig, SafetyFilter, SlackState, Table,
};

const SAFETY_TOLERANCE: f64 = 1e-3;
const BASELINE_VIOLATION: f64 = 0.01;
const BASELINE_MIN_EPISODES: usize = 90;
const SUCCESS_MARGIN: f64 = 0.10;
const ANNIHILATION_TOL: f64 = 1e-9;
const CLOSED_LOOP_TOL: f64 = 1e-8;
const AFFINITY_TOL: f64 = 1e-10;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const WORKED_EXAMPLE_TOL: f64 = 1e-10;
const MEDIAN_BUDGET_MS: f64 = 1.0;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn batch(
    policy: PolicySpec,
    safety: Safety,
    episodes: usize,
) -> Vec<tangent_shield::harness::EpisodeResult> {
    let cfg = ExperimentConfig {
        policy,
        safety,
        episodes,
        ..ExperimentConfig::default()
    };
    run_experiment_episodes(&cfg, false)
        .expect("batch runs")
        .into_iter()
        .map(|o| o.result)
        .collect()
}

fn safety_guarantee() -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for policy in [
        PolicySpec::Scripted,
        PolicySpec::Random,
        PolicySpec::Adversarial,
    ] {
        let results = batch(policy.clone(), Safety::On, 100);
        let safe = results
            .iter()
            .filter(|r| r.protocol_error.is_none() && r.max_violation <= SAFETY_TOLERANCE)
            .count();
        let worst = results.iter().map(|r| r.max_violation).fold(0.0, f64::max);
        passed &= safe == 100;
        parts.push(format!("{policy} {safe}/100 safe (worst {worst:.2e})"));
    }
    verdict(passed, parts.join(", "))
}

fn unsafe_baseline() -> Verdict {
    let results = batch(PolicySpec::Adversarial, Safety::Off, 100);
    let violating = results
        .iter()
        .filter(|r| r.max_violation > BASELINE_VIOLATION)
        .count();
    verdict(
        violating >= BASELINE_MIN_EPISODES,
        format!("{violating}/100 episodes above {BASELINE_VIOLATION}"),
    )
}

fn non_conservative() -> Verdict {
    let rate = |safety| {
        let results = batch(PolicySpec::Scripted, safety, 200);
        results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
    };
    let (on, off) = (rate(Safety::On), rate(Safety::Off));
    verdict(
        on >= off - SUCCESS_MARGIN,
        format!("success on {on:.3}, off {off:.3}"),
    )
}

struct Instance {
    jg: DMatrix<f64>,
    g: DMatrix<f64>,
    f: DVector<f64>,
    b: DVector<f64>,
    mu: DVector<f64>,
    s: DVector<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (k, n, m) = (
        rng.random_range(1..8),
        rng.random_range(1..6),
        rng.random_range(1..5),
    );
    let mut uniform = |rows, cols, lo: f64, hi: f64| {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
    };
    Instance {
        jg: uniform(k, n, -2.0, 2.0),
        g: uniform(n, m, -2.0, 2.0),
        f: uniform(n, 1, -1.0, 1.0).column(0).into_owned(),
        b: uniform(k, 1, -1.0, 0.0).column(0).into_owned(),
        mu: uniform(k, 1, -1.5, 1.5).column(0).into_owned(),
        s: uniform(n, 1, -1.0, 1.0).column(0).into_owned(),
    }
}

fn instance_filter(inst: &Instance) -> SafetyFilter<f64> {
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
        damping: 0.0,
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

fn filter_numerics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut annihilation, mut closed_loop, mut affinity) = (0.0f64, 0.0f64, 0.0f64);
    let (mut closed_loop_cases, mut affinity_cases) = (0, 0);
    for _ in 0..1000 {
        let inst = random_instance(&mut rng);
        let (k, m) = (inst.jg.nrows(), inst.g.ncols());
        let jc =
            augmented_jacobian(&inst.jg, &inst.g, &slack_map_derivative(&inst.mu, 3.0)).unwrap();
        let w = DVector::from_fn(m + k, |i, _| if i < m { 1.0 } else { 100.0 });
        let p = tangent_projector(&jc, &w, 0.0).unwrap();
        annihilation = annihilation.max((&jc * p).amax());

        let mut filter = instance_filter(&inst);
        let a = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
        let b = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
        let mid = (&a + &b) * 0.5;
        let oa = filter.filter_action(&inst.s, &a).unwrap();
        if !oa.diagnostics.correction_clipped {
            closed_loop_cases += 1;
            closed_loop =
                closed_loop.max(closed_loop_residual(&filter, &inst.s, &oa).unwrap().amax());
        }
        let ob = filter.filter_action(&inst.s, &b).unwrap();
        let om = filter.filter_action(&inst.s, &mid).unwrap();
        if [&oa, &ob, &om]
            .iter()
            .all(|o| o.diagnostics.tangent_scale == 1.0)
        {
            affinity_cases += 1;
            let expect = (oa.stacked() + ob.stacked()) * 0.5;
            affinity = affinity.max((om.stacked() - expect).amax());
        }
    }
    verdict(
        annihilation <= ANNIHILATION_TOL
            && closed_loop <= CLOSED_LOOP_TOL
            && affinity <= AFFINITY_TOL
            && closed_loop_cases > 0
            && affinity_cases > 0,
        format!(
            "|J_c P| {annihilation:.1e}, closed-loop {closed_loop:.1e} ({closed_loop_cases} cases), affinity {affinity:.1e} ({affinity_cases} cases)"
        ),
    )
}

fn jacobian_oracles() -> Verdict {
    let arm = Arm::default();
    let set = default_constraints(&arm, &Table::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / a.amax().max(1.0);
    let (mut ee_err, mut g_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let q = Vector3::from_fn(|_, _| rng.random_range(-2.9..2.9));
        let qv = DVector::from_column_slice(q.as_slice());
        let ee = |s: &DVector<f64>| {
            DVector::from_column_slice(arm.end_effector(&Vector3::new(s[0], s[1], s[2])).as_slice())
        };
        let j = DMatrix::from_column_slice(2, 3, arm.ee_jacobian(&q).as_slice());
        ee_err = ee_err.max(rel(&j, &finite_difference_jacobian(ee, &qv, 1e-6)));
        let ev = set.evaluate(&qv).unwrap();
        let fd = finite_difference_jacobian(|s| set.evaluate(s).unwrap().values, &qv, 1e-6);
        g_err = g_err.max(rel(&ev.jacobian, &fd));
    }
    verdict(
        ee_err <= JACOBIAN_REL_TOL && g_err <= JACOBIAN_REL_TOL,
        format!("ee {ee_err:.1e}, constraints {g_err:.1e}"),
    )
}

fn worked_example() -> Verdict {
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
    verdict(
        err <= WORKED_EXAMPLE_TOL,
        format!(
            "u_safe {:?}, mu_dot {:?}",
            out.u_safe.as_slice(),
            out.mu_dot.as_slice()
        ),
    )
}

fn run_cli(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_tangent-shield"))
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"policy": "random", "safety": "on", "episodes": 20, "seed": 17}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !run_cli(&config, &a) || !run_cli(&config, &b) {
        return verdict(false, "cli run failed".into());
    }
    let same = ["episodes.csv", "summary.json"].iter().all(|f| {
        std::fs::read(a.join(f))
            .ok()
            .is_some_and(|x| Some(x) == std::fs::read(b.join(f)).ok())
    });
    verdict(
        same,
        "episodes.csv and summary.json byte-identical across two runs".into(),
    )
}

fn performance() -> Verdict {
    let arm = Arm::default();
    let set = default_constraints(&arm, &Table::default()).unwrap();
    let plant = make_velocity_integrator(3, arm.qd_max).unwrap();
    let mut filter = SafetyFilter::new(plant, set, FilterConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = DVector::from_column_slice(&[1.2, -2.4, 1.0]);
    filter.reset(&s).unwrap();
    let mut times = Vec::with_capacity(2000);
    for _ in 0..2000 {
        let u = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let t0 = Instant::now();
        let out = filter.filter_action(&s, &u).unwrap();
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    verdict(
        median < MEDIAN_BUDGET_MS,
        format!("median {median:.4} ms at n=3, m=3, k=18"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("safety guarantee", safety_guarantee),
        ("unsafe baseline contrast", unsafe_baseline),
        ("non-conservativeness", non_conservative),
        ("filter numerics", filter_numerics),
        ("jacobian oracles", jacobian_oracles),
        ("worked example", worked_example),
        ("determinism", determinism),
        ("performance", performance),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let v = check();
        if !v.passed {
            failures += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.1}s]",
            if v.passed { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
