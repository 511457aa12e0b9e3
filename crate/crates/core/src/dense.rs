//! Small dense helpers over `nalgebra` used by the drivers and the oracles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(context.to_string()))
}

/// `log det` of a symmetric positive-definite matrix.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m, "logdet")?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn solve_spd(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, "solve")?.solve(b))
}

pub fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, "inverse")?.inverse())
}

/// Inverse of a general square matrix (used when positive-definiteness may
/// have been lost, e.g. noisy precision matrices).
pub fn inverse_general(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("matrix is singular".into()))
}

/// Lower Cholesky factor with the order of rows and columns reversed, i.e.
/// the upper triangular `U` with `U Uᵀ = m`.
pub fn reverse_cholesky_upper(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let reversed = DMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    let l = cholesky(&reversed, "aggregated block")?.unpack();
    Ok(DMatrix::from_fn(n, n, |i, j| l[(n - 1 - i, n - 1 - j)]))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
