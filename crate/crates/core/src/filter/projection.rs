//! Closed-form projector algebra on the augmented Jacobian `[J_g G | diag sigma']`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// `J_c = [J_g G | diag(sigma'(mu))]`, a `k x (m + k)` matrix.
pub fn augmented_jacobian<T: Real>(
    jac_g: &DMatrix<T>,
    control_matrix: &DMatrix<T>,
    slack_derivative: &DVector<T>,
) -> Result<DMatrix<T>> {
    let k = jac_g.nrows();
    if jac_g.ncols() != control_matrix.nrows() {
        return Err(Error::contract(format!(
            "J_g is {:?} but G is {:?}",
            jac_g.shape(),
            control_matrix.shape()
        )));
    }
    if slack_derivative.len() != k {
        return Err(Error::contract(format!(
            "slack derivative has length {}, expected {k}",
            slack_derivative.len()
        )));
    }
    let m = control_matrix.ncols();
    let mut jc = DMatrix::zeros(k, m + k);
    jc.columns_mut(0, m).copy_from(&(jac_g * control_matrix));
    for i in 0..k {
        jc[(i, m + i)] = slack_derivative[i];
    }
    Ok(jc)
}

/// Weighted damped pseudoinverse `W J^T (J W J^T + lambda^2 I)^-1`.
///
/// `weights` is the diagonal of `W`. The inner `k x k` matrix is symmetric
/// positive definite whenever `J` has full row rank or `lambda > 0`, and is
/// solved by Cholesky, so the result is unique and deterministic.
pub fn weighted_pseudoinverse<T: Real>(
    jac: &DMatrix<T>,
    weights: &DVector<T>,
    lambda: T,
) -> Result<DMatrix<T>> {
    let (k, cols) = jac.shape();
    if weights.len() != cols {
        return Err(Error::contract(format!(
            "weight vector has length {}, expected {cols}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::contract("pseudoinverse weights must be positive"));
    }
    if lambda < T::zero() {
        return Err(Error::contract("damping must be non-negative"));
    }
    if k == 0 {
        return Ok(DMatrix::zeros(cols, 0));
    }
    // W J^T: scale row i of J^T by w_i
    let mut wjt = jac.transpose();
    for (i, mut row) in wjt.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    let mut inner = jac * &wjt;
    let damp = lambda * lambda;
    for i in 0..k {
        inner[(i, i)] += damp;
    }
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::Singular("J W J^T + lambda^2 I is not positive definite".into()))?;
    // (W J^T) inner^-1 = (inner^-1 J W)^T, inner symmetric
    let solved = chol.solve(&wjt.transpose());
    Ok(solved.transpose())
}

/// `P = I - J^+_W J`. For `lambda = 0`, `J P = 0` up to round-off.
pub fn tangent_projector<T: Real>(
    jac: &DMatrix<T>,
    weights: &DVector<T>,
    lambda: T,
) -> Result<DMatrix<T>> {
    let pinv = weighted_pseudoinverse(jac, weights, lambda)?;
    Ok(projector_from_pseudoinverse(jac, &pinv))
}

pub(crate) fn projector_from_pseudoinverse<T: Real>(
    jac: &DMatrix<T>,
    pinv: &DMatrix<T>,
) -> DMatrix<T> {
    let cols = jac.ncols();
    DMatrix::identity(cols, cols) - pinv * jac
}
