//! Stacked inequality constraints `g(s) <= 0` with analytic Jacobians.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

type BlockFn<T> = dyn Fn(&DVector<T>) -> (DVector<T>, DMatrix<T>) + Send + Sync;
type PointFn<T> = dyn Fn(&DVector<T>) -> (Vector2<T>, DMatrix<T>) + Send + Sync;

#[derive(Clone)]
struct Block<T: Real> {
    labels: Vec<String>,
    eval: Arc<BlockFn<T>>,
}

/// Values and Jacobian of a constraint set at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEvaluation<T: Real> {
    pub values: DVector<T>,
    pub jacobian: DMatrix<T>,
}

/// An ordered stack of differentiable constraints over an `n`-dimensional state.
///
/// Each row is safe when its value is `<= 0`. Rows keep their natural units;
/// an optional per-row weight vector rescales them for the violation metric only.
#[derive(Clone)]
pub struct ConstraintSet<T: Real> {
    n: usize,
    blocks: Vec<Block<T>>,
    weights: Option<DVector<T>>,
}

impl<T: Real> fmt::Debug for ConstraintSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("n", &self.n)
            .field("labels", &self.labels())
            .finish_non_exhaustive()
    }
}

impl<T: Real> ConstraintSet<T> {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            blocks: Vec::new(),
            weights: None,
        }
    }

    /// A custom block. `eval` must return `labels.len()` values and a
    /// `labels.len() x n` Jacobian.
    pub fn from_fn(
        n: usize,
        labels: Vec<String>,
        eval: impl Fn(&DVector<T>) -> (DVector<T>, DMatrix<T>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            blocks: vec![Block {
                labels,
                eval: Arc::new(eval),
            }],
            weights: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Number of rows `k`.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.labels.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .flat_map(|b| b.labels.iter().map(String::as_str))
            .collect()
    }

    /// Prepends `prefix.` to every label.
    pub fn named(mut self, prefix: &str) -> Self {
        for block in &mut self.blocks {
            for label in &mut block.labels {
                *label = format!("{prefix}.{label}");
            }
        }
        self
    }

    /// Concatenates two sets; rows of `self` come first.
    pub fn stack(mut self, other: ConstraintSet<T>) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::contract(format!(
                "cannot stack constraint sets over {} and {} dimensional states",
                self.n, other.n
            )));
        }
        let k_self = self.len();
        let k_other = other.len();
        self.weights = match (self.weights.take(), other.weights) {
            (None, None) => None,
            (a, b) => {
                let a = a.unwrap_or_else(|| DVector::from_element(k_self, T::one()));
                let b = b.unwrap_or_else(|| DVector::from_element(k_other, T::one()));
                Some(DVector::from_iterator(
                    k_self + k_other,
                    a.iter().chain(b.iter()).copied(),
                ))
            }
        };
        self.blocks.extend(other.blocks);
        Ok(self)
    }

    /// Per-row scaling used by [`ConstraintSet::violation`]. Defaults to all ones.
    pub fn with_weights(mut self, weights: DVector<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::contract(format!(
                "weight vector has length {}, expected {}",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::contract("constraint weights must be positive"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn evaluate(&self, s: &DVector<T>) -> Result<ConstraintEvaluation<T>> {
        if s.len() != self.n {
            return Err(Error::contract(format!(
                "state has length {}, constraint set expects {}",
                s.len(),
                self.n
            )));
        }
        let k = self.len();
        let mut values = DVector::zeros(k);
        let mut jacobian = DMatrix::zeros(k, self.n);
        let mut row = 0;
        for block in &self.blocks {
            let rows = block.labels.len();
            let (v, j) = (block.eval)(s);
            if v.len() != rows || j.shape() != (rows, self.n) {
                return Err(Error::contract(format!(
                    "constraint block {:?} returned {} values and a {:?} Jacobian",
                    block.labels.first(),
                    v.len(),
                    j.shape()
                )));
            }
            for r in 0..rows {
                if !v[r].is_finite() || j.row(r).iter().any(|x| !x.is_finite()) {
                    return Err(Error::non_finite(block.labels[r].clone()));
                }
            }
            values.rows_mut(row, rows).copy_from(&v);
            jacobian.rows_mut(row, rows).copy_from(&j);
            row += rows;
        }
        Ok(ConstraintEvaluation { values, jacobian })
    }

    /// Weighted violation `max(0, max_i w_i g_i)`.
    pub fn violation(&self, values: &DVector<T>) -> T {
        match &self.weights {
            None => max_violation(values.as_slice()),
            Some(w) => max_violation(values.component_mul(w).as_slice()),
        }
    }
}

/// `max(0, max_i values_i)`; zero for an empty vector.
pub fn max_violation<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc.max(*v))
}

/// Central differences `(g(s + h e_i) - g(s - h e_i)) / 2h`, one column per state.
pub fn finite_difference_jacobian<T: Real>(
    g: impl Fn(&DVector<T>) -> DVector<T>,
    s: &DVector<T>,
    h: T,
) -> DMatrix<T> {
    let k = g(s).len();
    let n = s.len();
    let two_h = h + h;
    let mut jac = DMatrix::zeros(k, n);
    let mut probe = s.clone();
    for i in 0..n {
        probe[i] = s[i] + h;
        let plus = g(&probe);
        probe[i] = s[i] - h;
        let minus = g(&probe);
        probe[i] = s[i];
        jac.set_column(i, &((plus - minus) / two_h));
    }
    jac
}

/// Two rows per selected index: `s_i - hi_i <= 0` then `lo_i - s_i <= 0`.
pub fn box_constraints<T: Real>(
    lo: &DVector<T>,
    hi: &DVector<T>,
    select: &[usize],
) -> Result<ConstraintSet<T>> {
    if select.is_empty() {
        return Err(Error::contract(
            "box constraint needs a non-empty selection",
        ));
    }
    let n = lo.len();
    if hi.len() != n {
        return Err(Error::contract("lo and hi must have equal length"));
    }
    for &i in select {
        if i >= n {
            return Err(Error::contract(format!(
                "index {i} out of range for n = {n}"
            )));
        }
        if !(lo[i] < hi[i]) {
            return Err(Error::contract(format!("lo < hi violated at index {i}")));
        }
    }
    let labels = select
        .iter()
        .flat_map(|i| [format!("upper[{i}]"), format!("lower[{i}]")])
        .collect();
    let select = select.to_vec();
    let (lo, hi) = (lo.clone(), hi.clone());
    Ok(ConstraintSet::from_fn(n, labels, move |s| {
        let k = 2 * select.len();
        let mut values = DVector::zeros(k);
        let mut jac = DMatrix::zeros(k, n);
        for (r, &i) in select.iter().enumerate() {
            values[2 * r] = s[i] - hi[i];
            values[2 * r + 1] = lo[i] - s[i];
            jac[(2 * r, i)] = T::one();
            jac[(2 * r + 1, i)] = -T::one();
        }
        (values, jac)
    }))
}

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rect<T: Real> {
    pub x_lo: T,
    pub x_hi: T,
    pub y_lo: T,
    pub y_hi: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x_lo: T, x_hi: T, y_lo: T, y_hi: T) -> Self {
        Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        }
    }

    /// Shrinks by `margin` on every side (negative margin expands).
    pub fn shrink(&self, margin: T) -> Self {
        Self::new(
            self.x_lo + margin,
            self.x_hi - margin,
            self.y_lo + margin,
            self.y_hi - margin,
        )
    }

    pub fn contains(&self, p: &Vector2<T>) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn center(&self) -> Vector2<T> {
        let half = crate::real::<T>(0.5);
        Vector2::new(
            (self.x_lo + self.x_hi) * half,
            (self.y_lo + self.y_hi) * half,
        )
    }
}

/// Keeps a state-dependent point inside `rect` shrunk by `margin`.
///
/// `point` returns the position and its `2 x n` Jacobian. Rows are
/// `x - x_hi'`, `x_lo' - x`, `y - y_hi'`, `y_lo' - y`.
pub fn point_in_rectangle_constraints<T: Real>(
    n: usize,
    point: impl Fn(&DVector<T>) -> (Vector2<T>, DMatrix<T>) + Send + Sync + 'static,
    rect: Rect<T>,
    margin: T,
) -> Result<ConstraintSet<T>> {
    let inner = rect.shrink(margin);
    if !(inner.x_lo < inner.x_hi && inner.y_lo < inner.y_hi) {
        return Err(Error::contract(
            "rectangle is degenerate after margin shrink",
        ));
    }
    let point: Arc<PointFn<T>> = Arc::new(point);
    let labels = ["x_max", "x_min", "y_max", "y_min"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(ConstraintSet::from_fn(n, labels, move |s| {
        let (p, jp) = point(s);
        let values = DVector::from_vec(vec![
            p.x - inner.x_hi,
            inner.x_lo - p.x,
            p.y - inner.y_hi,
            inner.y_lo - p.y,
        ]);
        let mut jac = DMatrix::zeros(4, jp.ncols());
        jac.row_mut(0).copy_from(&jp.row(0));
        jac.row_mut(1).copy_from(&(-jp.row(0)));
        jac.row_mut(2).copy_from(&jp.row(1));
        jac.row_mut(3).copy_from(&(-jp.row(1)));
        (values, jac)
    }))
}
