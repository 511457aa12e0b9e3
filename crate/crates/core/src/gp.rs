//! Gaussian-process regression with a zero prior mean.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::dense::cholesky;
use crate::factor::{factorize_with_ordering, FactorParams, Method, SparseFactor};
use crate::kernel::{Covariance, KernelCovariance, KernelSpec, PointSet};
use crate::ordering::{reverse_maximin, reverse_maximin_after, Ordering};
use crate::select::{select_multi, select_single};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub mean: Vec<f64>,
    /// Posterior variances, clamped at zero.
    pub var: Vec<f64>,
    /// Full posterior covariance when it was formed.
    pub cov: Option<DMatrix<f64>>,
    /// Training points used per prediction (or in total for joint methods).
    pub selected: Vec<usize>,
    pub nnz: usize,
    pub elapsed: Duration,
}

fn check(spec: &KernelSpec, x_tr: &PointSet, y_tr: &[f64], x_pr: &PointSet) -> Result<()> {
    spec.validate()?;
    if y_tr.len() != x_tr.len() {
        return Err(Error::DimensionMismatch {
            expected: x_tr.len(),
            got: y_tr.len(),
        });
    }
    if !x_pr.is_empty() && !x_tr.is_empty() && x_tr.dim() != x_pr.dim() {
        return Err(Error::DimensionMismatch {
            expected: x_tr.dim(),
            got: x_pr.dim(),
        });
    }
    if y_tr.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("training observations"));
    }
    Ok(())
}

fn cross(spec: &KernelSpec, a: &PointSet, b: &PointSet) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| spec.cross(a.point(i), b.point(j)))
}

/// Matrix `K_{Pr,Tr} K_{Tr,Tr}⁻¹` and the posterior covariance; the mean for
/// any observation vector is the first applied to it.
pub struct DensePosterior {
    pub weights: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl DensePosterior {
    pub fn new(spec: &KernelSpec, x_tr: &PointSet, x_pr: &PointSet) -> Result<Self> {
        let m = x_pr.len();
        let k_pp = KernelCovariance::new(spec, x_pr).dense();
        if x_tr.is_empty() {
            return Ok(DensePosterior {
                weights: DMatrix::zeros(m, 0),
                cov: k_pp,
            });
        }
        let k_tt = KernelCovariance::new(spec, x_tr).dense();
        let k_tp = cross(spec, x_tr, x_pr);
        let chol = cholesky(&k_tt, "training covariance")?;
        let solved = chol.solve(&k_tp);
        let cov = k_pp - k_tp.transpose() * &solved;
        Ok(DensePosterior {
            weights: solved.transpose(),
            cov,
        })
    }

    pub fn mean(&self, y_tr: &[f64]) -> Vec<f64> {
        (&self.weights * DVector::from_column_slice(y_tr)).iter().copied().collect()
    }
}

/// Exact posterior by dense solves.
pub fn posterior_dense(spec: &KernelSpec, x_tr: &PointSet, y_tr: &[f64], x_pr: &PointSet) -> Result<RegressionResult> {
    check(spec, x_tr, y_tr, x_pr)?;
    let start = Instant::now();
    let post = DensePosterior::new(spec, x_tr, x_pr)?;
    let mean = post.mean(y_tr);
    Ok(RegressionResult {
        var: post.cov.diagonal().iter().map(|v| v.max(0.0)).collect(),
        mean,
        cov: Some(post.cov),
        selected: vec![x_tr.len()],
        nnz: 0,
        elapsed: start.elapsed(),
    })
}

/// Selects `s` training points by conditional selection (per prediction
/// point, or jointly for all of them with `multi`) and conditions on those
/// only.
pub fn regress_directed(
    spec: &KernelSpec,
    x_tr: &PointSet,
    y_tr: &[f64],
    x_pr: &PointSet,
    s: usize,
    multi: bool,
) -> Result<RegressionResult> {
    check(spec, x_tr, y_tr, x_pr)?;
    let start = Instant::now();
    let n = x_tr.len();
    let m = x_pr.len();
    if s >= n {
        let mut out = posterior_dense(spec, x_tr, y_tr, x_pr)?;
        out.elapsed = start.elapsed();
        return Ok(out);
    }
    let joint = x_tr.concat(x_pr)?;
    let cov = KernelCovariance::new(spec, &joint);
    let candidates: Vec<usize> = (0..n).collect();
    let subset = |idx: &[usize]| -> (PointSet, Vec<f64>) {
        (x_tr.select(idx), idx.iter().map(|&i| y_tr[i]).collect())
    };

    if multi {
        let targets: Vec<usize> = (n..n + m).collect();
        let chosen = if s == 0 || m == 0 {
            Vec::new()
        } else {
            select_multi(&cov, &targets, &candidates, s)?.indices
        };
        let (xs, ys) = subset(&chosen);
        let mut out = posterior_dense(spec, &xs, &ys, x_pr)?;
        out.selected = vec![chosen.len()];
        out.elapsed = start.elapsed();
        return Ok(out);
    }

    let mut mean = Vec::with_capacity(m);
    let mut var = Vec::with_capacity(m);
    let mut selected = Vec::with_capacity(m);
    for t in 0..m {
        let chosen = if s == 0 {
            Vec::new()
        } else {
            select_single(&cov, n + t, &candidates, s)?.indices
        };
        let (xs, ys) = subset(&chosen);
        let one = x_pr.select(&[t]);
        let r = posterior_dense(spec, &xs, &ys, &one)?;
        mean.push(r.mean[0]);
        var.push(r.var[0]);
        selected.push(chosen.len());
    }
    Ok(RegressionResult {
        mean,
        var,
        cov: None,
        selected,
        nnz: 0,
        elapsed: start.elapsed(),
    })
}

/// Sparse factor of the joint covariance with prediction points first.
pub struct JointFactor {
    pub factor: SparseFactor,
    /// Number of prediction points (the leading positions).
    pub m: usize,
}

impl JointFactor {
    /// Orders the training points by reverse maximin, then the prediction
    /// points by reverse maximin with every training point counted as
    /// already chosen, and factorizes `[Pr; Tr]`.
    pub fn new(
        spec: &KernelSpec,
        x_tr: &PointSet,
        x_pr: &PointSet,
        method: Method,
        params: &FactorParams,
    ) -> Result<Self> {
        let m = x_pr.len();
        let n = x_tr.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(
                "joint factorization needs training and prediction points".into(),
            ));
        }
        let tr_order = reverse_maximin(x_tr, params.p, params.seed)?;
        let pr_order = reverse_maximin_after(x_pr, x_tr, params.p)?;
        let mut perm: Vec<usize> = pr_order.perm().to_vec();
        perm.extend(tr_order.perm().iter().map(|&i| m + i));
        let mut ell = pr_order.length_scales().to_vec();
        ell.extend_from_slice(tr_order.length_scales());
        let ordering = Ordering::from_parts(perm, ell, params.p)?;
        let joint = x_pr.concat(x_tr)?;
        let out = factorize_with_ordering(spec, &joint, ordering, method, params)?;
        Ok(JointFactor { factor: out.factor, m })
    }

    /// Posterior mean `−L_{Pr,Pr}⁻ᵀ L_{Tr,Pr}ᵀ y_Tr`, in the caller's order of
    /// prediction points.
    pub fn mean(&self, y_tr: &[f64]) -> Vec<f64> {
        let m = self.m;
        let perm = self.factor.perm();
        // w = L_{Tr,Pr}ᵀ y_Tr, by prediction position
        let mut w: Vec<f64> = (0..m)
            .map(|i| {
                let (rows, vals) = self.factor.column(i);
                rows.iter()
                    .zip(vals)
                    .filter(|(&r, _)| r >= m)
                    .map(|(&r, &v)| v * y_tr[perm[r] - m])
                    .sum()
            })
            .collect();
        // back substitution with L_{Pr,Pr}ᵀ
        for i in (0..m).rev() {
            let (rows, vals) = self.factor.column(i);
            let s: f64 = rows[1..]
                .iter()
                .zip(&vals[1..])
                .take_while(|(&r, _)| r < m)
                .map(|(&r, &v)| v * w[r])
                .sum();
            w[i] = (w[i] - s) / vals[0];
        }
        let mut mean = vec![0.0; m];
        for (pos, &raw) in perm[..m].iter().enumerate() {
            mean[raw] = -w[pos];
        }
        mean
    }

    /// `L_{Pr,Pr}⁻¹` as dense columns by prediction position: column `i` is
    /// supported on positions `≥ i`.
    fn inverse_columns(&self) -> Vec<Vec<f64>> {
        let m = self.m;
        (0..m)
            .map(|i| {
                let mut x = vec![0.0; m];
                x[i] = 1.0;
                for k in i..m {
                    let (rows, vals) = self.factor.column(k);
                    x[k] /= vals[0];
                    let xk = x[k];
                    if xk != 0.0 {
                        for (&r, &v) in rows[1..].iter().zip(&vals[1..]).take_while(|(&r, _)| r < m) {
                            x[r] -= v * xk;
                        }
                    }
                }
                x
            })
            .collect()
    }

    /// Posterior variances `diag(L_{Pr,Pr}⁻ᵀ L_{Pr,Pr}⁻¹)` in caller order.
    pub fn variances(&self) -> Vec<f64> {
        let m = self.m;
        // Cov = Xᵀ X with X = L⁻¹, so Cov_ii = ‖X_{:,i}‖²
        let inv = self.inverse_columns();
        let perm = self.factor.perm();
        let mut var = vec![0.0; m];
        for (pos, col) in inv.iter().enumerate() {
            var[perm[pos]] = col.iter().map(|x| x * x).sum();
        }
        var
    }

    /// Full posterior covariance in caller order.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.m;
        let inv = self.inverse_columns();
        let x = DMatrix::from_fn(m, m, |r, c| inv[c][r]);
        let cov_pos = x.transpose() * x;
        let perm = self.factor.perm();
        let mut cov = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                cov[(perm[a], perm[b])] = cov_pos[(a, b)];
            }
        }
        cov
    }
}

/// Posterior from a sparse factor of the joint covariance, prediction points
/// ordered first.
pub fn regress_global(
    spec: &KernelSpec,
    x_tr: &PointSet,
    y_tr: &[f64],
    x_pr: &PointSet,
    method: Method,
    params: &FactorParams,
) -> Result<RegressionResult> {
    check(spec, x_tr, y_tr, x_pr)?;
    let start = Instant::now();
    let joint = JointFactor::new(spec, x_tr, x_pr, method, params)?;
    let mean = joint.mean(y_tr);
    let var = joint.variances().into_iter().map(|v| v.max(0.0)).collect();
    Ok(RegressionResult {
        mean,
        var,
        cov: None,
        selected: vec![x_tr.len()],
        nnz: joint.factor.nnz(),
        elapsed: start.elapsed(),
    })
}

/// Posterior log determinant `log det Cov[y_Pr | y_Tr]` from a joint factor.
pub fn posterior_logdet(joint: &JointFactor) -> f64 {
    -2.0 * (0..joint.m).map(|i| joint.factor.diagonal(i).ln()).sum::<f64>()
}

/// Dense covariance access used by callers that sample from the joint prior.
pub fn joint_covariance(spec: &KernelSpec, x_tr: &PointSet, x_pr: &PointSet) -> Result<DMatrix<f64>> {
    let joint = x_tr.concat(x_pr)?;
    Ok(KernelCovariance::new(spec, &joint).dense())
}

/// Accuracy of a sparse posterior over many prior realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteMetrics {
    /// RMSE between sparse and exact posterior means, averaged over draws.
    pub rmse_vs_dense: f64,
    /// RMSE between sparse posterior means and the drawn values.
    pub rmse_vs_truth: f64,
    /// Fraction of drawn values inside the central `level` intervals.
    pub coverage: f64,
    pub logdet: f64,
}

/// Joint prior draws at training and prediction points, with the exact
/// posterior means of every draw.
pub struct SyntheticSuite {
    pub x_tr: PointSet,
    pub x_pr: PointSet,
    /// One column per realization.
    pub y_tr: DMatrix<f64>,
    pub y_pr: DMatrix<f64>,
    pub dense_mean: DMatrix<f64>,
    pub dense_var: Vec<f64>,
}

impl SyntheticSuite {
    pub fn draw<R: rand::Rng + ?Sized>(
        spec: &KernelSpec,
        x_tr: PointSet,
        x_pr: PointSet,
        realizations: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = x_tr.len();
        let m = x_pr.len();
        let joint = joint_covariance(spec, &x_tr, &x_pr)?;
        let l = cholesky(&joint, "joint prior covariance")?.unpack();
        let z = DMatrix::from_fn(n + m, realizations, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = l * z;
        let y_tr = y.rows(0, n).into_owned();
        let y_pr = y.rows(n, m).into_owned();
        let post = DensePosterior::new(spec, &x_tr, &x_pr)?;
        let dense_mean = &post.weights * &y_tr;
        let dense_var = post.cov.diagonal().iter().map(|v| v.max(0.0)).collect();
        Ok(SyntheticSuite {
            x_tr,
            x_pr,
            y_tr,
            y_pr,
            dense_mean,
            dense_var,
        })
    }

    pub fn realizations(&self) -> usize {
        self.y_tr.ncols()
    }

    pub fn evaluate(&self, joint: &JointFactor, level: f64) -> Result<SuiteMetrics> {
        let z = crate::metrics::central_z(level)?;
        let var = joint.variances();
        let sd: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
        let r = self.realizations();
        let m = self.x_pr.len();
        let (mut vs_dense, mut vs_truth, mut inside) = (0.0, 0.0, 0usize);
        for k in 0..r {
            let y: Vec<f64> = self.y_tr.column(k).iter().copied().collect();
            let mean = joint.mean(&y);
            let (mut d2, mut t2) = (0.0, 0.0);
            for i in 0..m {
                let truth = self.y_pr[(i, k)];
                d2 += (mean[i] - self.dense_mean[(i, k)]).powi(2);
                t2 += (mean[i] - truth).powi(2);
                if (truth - mean[i]).abs() <= z * sd[i] {
                    inside += 1;
                }
            }
            vs_dense += (d2 / m as f64).sqrt();
            vs_truth += (t2 / m as f64).sqrt();
        }
        Ok(SuiteMetrics {
            rmse_vs_dense: vs_dense / r as f64,
            rmse_vs_truth: vs_truth / r as f64,
            coverage: inside as f64 / (r * m) as f64,
            logdet: posterior_logdet(joint),
        })
    }
}
