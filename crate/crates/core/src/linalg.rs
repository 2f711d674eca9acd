//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{DerlError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// `xᵀ M x`
pub fn quad_form(m: &Matrix, x: &Vector) -> f64 {
    let mx = m * x;
    x.dot(&mx)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| DerlError::Numeric("matrix is not positive definite".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// `log det M` of a symmetric positive-definite matrix.
pub fn spd_logdet(m: &Matrix) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| DerlError::Numeric("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Nearest positive semidefinite matrix in Frobenius norm (negative eigenvalues set to 0).
pub fn psd_projection(m: &Matrix) -> Matrix {
    let mut eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues.apply(|x| *x = x.max(0.0));
    symmetrize(&eig.recompose())
}

/// Largest absolute entry, `‖A‖_{∞,∞}`.
pub fn max_abs_entry(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}
