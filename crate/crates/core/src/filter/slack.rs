use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{real, Real};

/// Above this value of `beta * mu` the softplus is evaluated asymptotically.
const OVERFLOW_GUARD: f64 = 30.0;

/// Slack coordinates `mu`, one per constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SlackState<T: Real> {
    pub mu: DVector<T>,
}

impl<T: Real> SlackState<T> {
    pub fn zeros(k: usize) -> Self {
        Self {
            mu: DVector::zeros(k),
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Softplus `ln(1 + e^(beta mu)) / beta`, strictly positive.
pub fn softplus<T: Real>(mu: T, beta: T) -> T {
    let x = beta * mu;
    if x > real(OVERFLOW_GUARD) {
        mu + (-x).exp() / beta
    } else {
        x.exp().ln_1p() / beta
    }
}

/// Derivative of [`softplus`] w.r.t. `mu`: the logistic `1 / (1 + e^(-beta mu))`.
pub fn softplus_derivative<T: Real>(mu: T, beta: T) -> T {
    T::one() / (T::one() + (-(beta * mu)).exp())
}

/// Inverse softplus `ln(e^(beta y) - 1) / beta` for `y > 0`.
pub fn softplus_inverse<T: Real>(y: T, beta: T) -> T {
    let x = beta * y;
    if x > real(OVERFLOW_GUARD) {
        y + (-(-x).exp()).ln_1p() / beta
    } else {
        x.exp_m1().ln() / beta
    }
}

/// Elementwise `sigma(mu)`.
pub fn slack_map<T: Real>(mu: &DVector<T>, beta: T) -> DVector<T> {
    mu.map(|m| softplus(m, beta))
}

/// Elementwise `sigma'(mu)`.
pub fn slack_map_derivative<T: Real>(mu: &DVector<T>, beta: T) -> DVector<T> {
    mu.map(|m| softplus_derivative(m, beta))
}

/// Places the slack on the manifold: `mu_i = sigma^-1(max(-g_i, floor))`.
///
/// Rows with `g_i >= -floor` get the floored slack, leaving a positive
/// residual `c_i = g_i + floor` for the error-correction term to remove.
pub fn initialize_slack<T: Real>(g_values: &DVector<T>, beta: T, slack_floor: T) -> SlackState<T> {
    SlackState {
        mu: g_values.map(|g| softplus_inverse((-g).max(slack_floor), beta)),
    }
}
