//! The safety filter: maps a nominal action onto the tangent space of the
//! slack-augmented constraint manifold `c(s, mu) = g(s) + sigma(mu) = 0`.
//!
//! With `J_c = [J_g G | diag sigma'(mu)]` and the weighted pseudoinverse
//! `J_c^+ = W J_c^T (J_c W J_c^T + lambda^2 I)^-1`, one step computes
//!
//! ```text
//! v_corr = -J_c^+ (J_g f(s) + K_c c)
//! v_tan  = (I - J_c^+ J_c) [u_nom; 0]
//! v      = v_corr + alpha v_tan
//! ```
//!
//! where `alpha in [0, 1]` is the largest scale keeping the control part of
//! `v` inside the control box (and, with a step horizon, the slack step
//! short of the boundary). Since `J_c v_tan = 0`, the scaling leaves
//! `c' = -K_c c` intact. The control part of `v` is the safe action and the
//! slack part is `mu'`, integrated by [`SafetyFilter::advance_slack`].

mod projection;
mod slack;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{real, ConstraintSet, ControlAffineSystem, Error, Real, Result};

pub use projection::{augmented_jacobian, tangent_projector, weighted_pseudoinverse};
pub use slack::{
    initialize_slack, slack_map, slack_map_derivative, softplus, softplus_derivative,
    softplus_inverse, SlackState,
};

/// `beta * mu_cap`: slack coordinates are clamped to `+-50 / beta`.
const SLACK_CAP: f64 = 50.0;

/// Share of a slack value the tangent motion may consume in one step.
const SLACK_STEP_FRACTION: f64 = 0.5;

/// Error-correction gain `K_c`, shared or one per constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Real")]
pub enum Gain<T: Real> {
    Uniform(T),
    PerConstraint(Vec<T>),
}

impl<T: Real> Gain<T> {
    fn expand(&self, k: usize) -> Result<DVector<T>> {
        match self {
            Gain::Uniform(g) => Ok(DVector::from_element(k, *g)),
            Gain::PerConstraint(v) if v.len() == k => Ok(DVector::from_column_slice(v)),
            Gain::PerConstraint(v) => Err(Error::Config(format!(
                "per-constraint gain has {} entries for {k} constraints",
                v.len()
            ))),
        }
    }

    fn all_positive(&self) -> bool {
        match self {
            Gain::Uniform(g) => *g > T::zero(),
            Gain::PerConstraint(v) => v.iter().all(|g| *g > T::zero()),
        }
    }
}

/// How [`SafetyFilter::advance_slack`] integrates `mu'` over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackUpdate {
    /// `mu <- mu + dt mu'`.
    Euler,
    /// Euler in `sigma` coordinates: `sigma(mu) <- sigma(mu) + dt sigma'(mu) mu'`.
    ///
    /// Softplus is convex, so a plain Euler step in `mu` always lands above
    /// the linear prediction of `sigma`. The excess accumulates in `c` with a
    /// positive sign, and at `dt = 0.02` it outpaces the correction term near
    /// the boundary.
    #[default]
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct FilterConfig<T: Real> {
    /// `K_c` in 1/s.
    pub correction_gain: Gain<T>,
    /// Softplus sharpness `beta`.
    pub beta: T,
    /// Weight `w_mu` of the slack coordinates in the projection metric.
    pub slack_weight: T,
    /// Pseudoinverse damping `lambda`.
    pub damping: T,
    /// Smallest slack value `sigma` assigned at reset.
    pub slack_floor: T,
    /// Violation accepted as safe by the evaluation, in constraint units.
    pub violation_tolerance: T,
    pub slack_update: SlackUpdate,
    /// Step length the output will be held for. When set, `alpha` is also
    /// limited so the tangent motion uses at most half of each slack value
    /// per step.
    pub step_horizon: Option<T>,
}

impl<T: Real> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            correction_gain: Gain::Uniform(real(10.0)),
            beta: real(3.0),
            slack_weight: real(100.0),
            damping: real(1e-6),
            slack_floor: real(1e-3),
            violation_tolerance: real(1e-3),
            slack_update: SlackUpdate::default(),
            step_horizon: None,
        }
    }
}

impl<T: Real> FilterConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.correction_gain.all_positive() {
            return Err(Error::Config("correction gain must be positive".into()));
        }
        if !(self.beta > T::zero()) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if !(self.slack_weight >= T::one()) {
            return Err(Error::Config("slack weight must be >= 1".into()));
        }
        if !(self.damping >= T::zero()) {
            return Err(Error::Config("damping must be non-negative".into()));
        }
        if !(self.slack_floor > T::zero()) {
            return Err(Error::Config("slack floor must be positive".into()));
        }
        if !(self.violation_tolerance >= T::zero()) {
            return Err(Error::Config(
                "violation tolerance must be non-negative".into(),
            ));
        }
        if let Some(h) = self.step_horizon {
            if !(h > T::zero()) {
                return Err(Error::Config("step horizon must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn slack_cap(&self) -> T {
        real::<T>(SLACK_CAP) / self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FilterDiagnostics<T: Real> {
    /// `||c||_2` before the step.
    pub c_norm: T,
    /// `max |J_c P|`.
    pub projector_residual: T,
    /// The correction alone left the control box and had to be clipped.
    pub correction_clipped: bool,
    /// `alpha`, the scale applied to the tangent component.
    pub tangent_scale: T,
    pub rank_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<T: Real> {
    pub u_safe: DVector<T>,
    pub mu_dot: DVector<T>,
    pub diagnostics: FilterDiagnostics<T>,
}

/// Stateful filter for one episode: holds the slack coordinates `mu`.
#[derive(Debug, Clone)]
pub struct SafetyFilter<T: Real> {
    system: ControlAffineSystem<T>,
    constraints: ConstraintSet<T>,
    config: FilterConfig<T>,
    slack: SlackState<T>,
    diagnostics: Option<FilterDiagnostics<T>>,
    calls: u64,
}

impl<T: Real> SafetyFilter<T> {
    pub fn new(
        system: ControlAffineSystem<T>,
        constraints: ConstraintSet<T>,
        config: FilterConfig<T>,
    ) -> Result<Self> {
        config.validate()?;
        if constraints.state_dim() != system.state_dim() {
            return Err(Error::contract(format!(
                "constraints act on {}-dimensional states but the system has n = {}",
                constraints.state_dim(),
                system.state_dim()
            )));
        }
        let k = constraints.len();
        config.correction_gain.expand(k)?;
        Ok(Self {
            system,
            constraints,
            config,
            slack: SlackState::zeros(k),
            diagnostics: None,
            calls: 0,
        })
    }

    pub fn system(&self) -> &ControlAffineSystem<T> {
        &self.system
    }

    pub fn constraints(&self) -> &ConstraintSet<T> {
        &self.constraints
    }

    pub fn config(&self) -> &FilterConfig<T> {
        &self.config
    }

    pub fn slack(&self) -> &SlackState<T> {
        &self.slack
    }

    /// Overrides the slack state, e.g. to start off the manifold.
    pub fn set_slack(&mut self, slack: SlackState<T>) -> Result<()> {
        if slack.len() != self.constraints.len() {
            return Err(Error::contract("slack length must equal constraint count"));
        }
        self.slack = slack;
        Ok(())
    }

    pub fn last_diagnostics(&self) -> Option<&FilterDiagnostics<T>> {
        self.diagnostics.as_ref()
    }

    /// Number of [`SafetyFilter::filter_action`] calls since construction.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Places `(s, mu)` on the manifold (floored for violated rows).
    pub fn reset(&mut self, s: &DVector<T>) -> Result<()> {
        let ev = self.constraints.evaluate(s)?;
        self.slack = initialize_slack(&ev.values, self.config.beta, self.config.slack_floor);
        self.diagnostics = None;
        Ok(())
    }

    /// `c = g(s) + sigma(mu)`.
    pub fn manifold_residual(&self, s: &DVector<T>) -> Result<DVector<T>> {
        let ev = self.constraints.evaluate(s)?;
        self.check_slack()?;
        Ok(ev.values + slack_map(&self.slack.mu, self.config.beta))
    }

    pub fn filter_action(&mut self, s: &DVector<T>, u_nom: &DVector<T>) -> Result<FilterOutput<T>> {
        let m = self.system.control_dim();
        if u_nom.len() != m {
            return Err(Error::contract(format!(
                "nominal action has length {}, expected {m}",
                u_nom.len()
            )));
        }
        if u_nom.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("nominal action"));
        }
        self.check_slack()?;
        self.calls += 1;

        let (u_min, u_max) = (self.system.u_min(), self.system.u_max());
        let k = self.constraints.len();
        if k == 0 {
            let u_safe = self.system.clamp_control(u_nom);
            let diagnostics = FilterDiagnostics {
                c_norm: T::zero(),
                projector_residual: T::zero(),
                correction_clipped: false,
                tangent_scale: T::one(),
                rank_ok: true,
            };
            self.diagnostics = Some(diagnostics);
            return Ok(FilterOutput {
                u_safe,
                mu_dot: DVector::zeros(0),
                diagnostics,
            });
        }

        let beta = self.config.beta;
        let ev = self.constraints.evaluate(s)?;
        let c = &ev.values + slack_map(&self.slack.mu, beta);
        let drift = self.system.drift(s)?;
        let g_mat = self.system.control_matrix(s)?;
        let sigma_prime = slack_map_derivative(&self.slack.mu, beta);
        let jc = augmented_jacobian(&ev.jacobian, &g_mat, &sigma_prime)?;

        let weights = DVector::from_fn(m + k, |i, _| {
            if i < m {
                T::one()
            } else {
                self.config.slack_weight
            }
        });
        let (pinv, rank_ok) = match weighted_pseudoinverse(&jc, &weights, self.config.damping) {
            Ok(p) => (p, true),
            Err(Error::Singular(_)) => {
                // only reachable with zero damping; retry with a conditioning floor
                let p = weighted_pseudoinverse(&jc, &weights, real(1e-9))?;
                (p, false)
            }
            Err(e) => return Err(e),
        };
        let projector = projection::projector_from_pseudoinverse(&jc, &pinv);

        let gain = self.config.correction_gain.expand(k)?;
        let target = &ev.jacobian * &drift + gain.component_mul(&c);
        let v_corr = -(&pinv * target);
        let mut nominal = DVector::zeros(m + k);
        nominal.rows_mut(0, m).copy_from(u_nom);
        let v_tan = &projector * nominal;

        let mut alpha = T::one();
        let mut correction_clipped = false;
        for i in 0..m {
            let (vc, t, lo, hi) = (v_corr[i], v_tan[i], u_min[i], u_max[i]);
            if vc > hi || vc < lo {
                correction_clipped = true;
                continue;
            }
            if t > T::zero() && vc + t > hi {
                alpha = alpha.min((hi - vc) / t);
            } else if t < T::zero() && vc + t < lo {
                alpha = alpha.min((lo - vc) / t);
            }
        }
        if let Some(h) = self.config.step_horizon {
            let sigma = slack_map(&self.slack.mu, beta);
            let keep = T::one() - real::<T>(SLACK_STEP_FRACTION);
            for i in 0..k {
                let room = sigma[i] + h * sigma_prime[i] * v_corr[m + i] - keep * sigma[i];
                let t = h * sigma_prime[i] * v_tan[m + i];
                if room >= T::zero() && t < -room {
                    alpha = alpha.min(room / -t);
                }
            }
        }
        let alpha = alpha.max(T::zero());

        let v = v_corr + v_tan * alpha;
        let u_safe = self
            .system
            .clamp_control(&DVector::from_column_slice(&v.as_slice()[..m]));
        let mu_dot = DVector::from_column_slice(&v.as_slice()[m..]);

        let diagnostics = FilterDiagnostics {
            c_norm: c.norm(),
            projector_residual: (&jc * &projector).amax(),
            correction_clipped,
            tangent_scale: alpha,
            rank_ok,
        };
        self.diagnostics = Some(diagnostics);

        if u_safe.iter().chain(mu_dot.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                label: "filter output".into(),
                detail: Some(format!("{diagnostics:?}")),
            });
        }
        Ok(FilterOutput {
            u_safe,
            mu_dot,
            diagnostics,
        })
    }

    /// One step of `mu'` according to [`FilterConfig::slack_update`], clamped
    /// to `+-50 / beta`.
    pub fn advance_slack(&mut self, mu_dot: &DVector<T>, dt: T) -> Result<()> {
        if !(dt > T::zero()) {
            return Err(Error::contract("dt must be positive"));
        }
        if mu_dot.len() != self.slack.len() {
            return Err(Error::contract(format!(
                "mu_dot has length {}, expected {}",
                mu_dot.len(),
                self.slack.len()
            )));
        }
        let cap = self.config.slack_cap();
        let beta = self.config.beta;
        let sigma_min = softplus(-cap, beta);
        self.slack.mu = match self.config.slack_update {
            SlackUpdate::Euler => self.slack.mu.zip_map(mu_dot, |mu, rate| mu + rate * dt),
            SlackUpdate::Sigma => self.slack.mu.zip_map(mu_dot, |mu, rate| {
                let sigma = softplus(mu, beta) + dt * softplus_derivative(mu, beta) * rate;
                softplus_inverse(sigma.max(sigma_min), beta)
            }),
        }
        .map(|mu| mu.clamp(-cap, cap));
        Ok(())
    }

    fn check_slack(&self) -> Result<()> {
        if self.slack.len() != self.constraints.len() {
            return Err(Error::contract(
                "slack state does not match constraint count",
            ));
        }
        Ok(())
    }
}

/// `J_g (f + G u) + diag(sigma') mu' + K_c c`: zero when the manifold
/// residual decays exactly as `c' = -K_c c`.
pub fn closed_loop_residual<T: Real>(
    filter: &SafetyFilter<T>,
    s: &DVector<T>,
    out: &FilterOutput<T>,
) -> Result<DVector<T>> {
    let ev = filter.constraints.evaluate(s)?;
    let beta = filter.config.beta;
    let c = &ev.values + slack_map(&filter.slack.mu, beta);
    let state_rate = filter.system.velocity(s, &out.u_safe)?;
    let gain = filter.config.correction_gain.expand(c.len())?;
    Ok(&ev.jacobian * state_rate
        + slack_map_derivative(&filter.slack.mu, beta).component_mul(&out.mu_dot)
        + gain.component_mul(&c))
}

impl<T: Real> FilterOutput<T> {
    /// `[u_safe; mu_dot]` stacked.
    pub fn stacked(&self) -> DVector<T> {
        DVector::from_iterator(
            self.u_safe.len() + self.mu_dot.len(),
            self.u_safe.iter().chain(self.mu_dot.iter()).copied(),
        )
    }
}
