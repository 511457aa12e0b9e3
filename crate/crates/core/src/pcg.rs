//! Preconditioned conjugate gradient.

use nalgebra::{DMatrix, DVector};

use crate::dense::{dot, norm};
use crate::factor::SparseFactor;
use crate::{Error, Result};

/// A symmetric positive-definite operator.
pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = self * DVector::from_column_slice(x);
        y.as_slice().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residuals `‖r‖/‖y‖`, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub solution: Vec<f64>,
}

/// Solves `Θ x = y` from `x = 0`, preconditioning with `M⁻¹ = P L Lᵀ Pᵀ`
/// when a factor is given.
pub fn pcg_solve<A: LinearOperator + ?Sized>(
    theta: &A,
    y: &[f64],
    precond: Option<&SparseFactor>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let n = theta.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if let Some(f) = precond {
        if f.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.n() });
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let precondition = |r: &[f64]| match precond {
        Some(f) => f.apply_precision(r),
        None => r.to_vec(),
    };

    let y_norm = norm(y);
    let mut x = vec![0.0; n];
    if y_norm == 0.0 {
        return Ok(SolveReport {
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
            solution: x,
        });
    }
    let mut r = y.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let q = theta.apply(&p);
        let pq = dot(&p, &q);
        let alpha = rz / pq;
        if !alpha.is_finite() {
            return Err(Error::NonFinite("conjugate gradient step"));
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;
        let rel = norm(&r) / y_norm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual"));
        }
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(SolveReport {
        iterations,
        residual_history: history,
        converged,
        solution: x,
    })
}
