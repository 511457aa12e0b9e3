use super::{better, local_rows, Choice, CholeskyColumns, GreedyState, ELIGIBLE_VARIANCE};
use crate::kernel::Covariance;
use crate::{Error, Result};

/// Single-target selection state backed by partial Cholesky columns.
///
/// Maximizes `Θ_{j,Pr|I}² / Θ_{j,j|I}`, the decrease of the target's
/// posterior variance.
pub struct SingleTargetState<'a, C: Covariance + ?Sized> {
    cov: &'a C,
    factor: CholeskyColumns,
    ncand: usize,
    diag: Vec<f64>,
    cond_var: Vec<f64>,
    cond_cov: Vec<f64>,
    target_var: f64,
    active: Vec<bool>,
}

impl<'a, C: Covariance + ?Sized> SingleTargetState<'a, C> {
    pub fn new(cov: &'a C, target: usize, candidates: &[usize]) -> Result<Self> {
        let rows = local_rows(candidates, &[target])?;
        let ncand = candidates.len();
        let diag: Vec<f64> = candidates.iter().map(|&j| cov.diag(j)).collect();
        let mut cond_cov = vec![0.0; ncand];
        cov.column(candidates, target, &mut cond_cov);
        Ok(SingleTargetState {
            cov,
            factor: CholeskyColumns::new(rows),
            ncand,
            cond_var: diag.clone(),
            diag,
            cond_cov,
            target_var: cov.diag(target),
            active: vec![true; ncand],
        })
    }

    /// `Θ_{j,j|I}` per candidate.
    pub fn cond_var(&self) -> &[f64] {
        &self.cond_var
    }

    /// `Θ_{j,Pr|I}` per candidate.
    pub fn cond_cov(&self) -> &[f64] {
        &self.cond_cov
    }

    pub fn target_var(&self) -> f64 {
        self.target_var
    }

    pub fn factor(&self) -> &CholeskyColumns {
        &self.factor
    }

    pub fn is_active(&self, local: usize) -> bool {
        self.active[local]
    }
}

impl<C: Covariance + ?Sized> GreedyState for SingleTargetState<'_, C> {
    fn best(&self) -> Option<Choice> {
        best_single(
            self.ncand,
            &self.active,
            self.factor.rows(),
            &self.diag,
            &self.cond_var,
            &self.cond_cov,
            self.target_var,
        )
    }

    fn select(&mut self, local: usize) -> Result<()> {
        let u = self.factor.append(self.cov, local)?;
        let ut = u[self.ncand];
        for ((v, c), x) in self.cond_var.iter_mut().zip(&mut self.cond_cov).zip(u) {
            *v -= x * x;
            *c -= x * ut;
        }
        self.target_var -= ut * ut;
        self.active[local] = false;
        Ok(())
    }

    fn objective(&self) -> f64 {
        self.target_var
    }

    fn exclude(&mut self, local: usize) {
        self.active[local] = false;
    }
}

fn best_single(
    ncand: usize,
    active: &[bool],
    rows: &[usize],
    diag: &[f64],
    cond_var: &[f64],
    cond_cov: &[f64],
    target_var: f64,
) -> Option<Choice> {
    let mut best: Option<(f64, usize)> = None;
    let mut best_local = 0;
    for j in 0..ncand {
        if !active[j] || !(cond_var[j] > ELIGIBLE_VARIANCE * diag[j]) {
            continue;
        }
        let gain = cond_cov[j] * cond_cov[j] / cond_var[j];
        if better(gain, rows[j], best, true) {
            best = Some((gain, rows[j]));
            best_local = j;
        }
    }
    best.map(|(gain, global)| {
        let ratio = gain / target_var;
        Choice {
            local: best_local,
            global,
            objective: target_var - gain,
            decrease: if ratio < 1.0 { -(-ratio).ln_1p() } else { f64::INFINITY },
        }
    })
}

/// Appends one index to an explicit inverse `P = Θ_{I,I}⁻¹` (row-major,
/// `s × s`) given `w = Θ_{I,k}` and `θ = Θ_{k,k}`.
pub(super) fn precision_append(prec: &mut Vec<f64>, s: usize, w: &[f64], theta: f64) -> Result<()> {
    let v: Vec<f64> = (0..s)
        .map(|a| (0..s).map(|b| prec[a * s + b] * w[b]).sum())
        .collect();
    let c = theta - w.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
    if !(c > 0.0) {
        return Err(Error::NotPositiveDefinite(
            "selected covariance block became singular".into(),
        ));
    }
    let m = s + 1;
    let mut next = vec![0.0; m * m];
    for a in 0..s {
        for b in 0..s {
            next[a * m + b] = prec[a * s + b] + v[a] * v[b] / c;
        }
        next[a * m + s] = -v[a] / c;
        next[s * m + a] = -v[a] / c;
    }
    next[s * m + s] = 1.0 / c;
    *prec = next;
    Ok(())
}

/// Symmetric quadratic form `xᵀ P y` with row-major `P`.
pub(super) fn quad(prec: &[f64], s: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for a in 0..s {
        let row = &prec[a * s..(a + 1) * s];
        acc += x[a] * row.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

/// Single-target selection maintaining `Θ_{I,I}⁻¹` explicitly.
pub struct SingleTargetPrecision<'a, C: Covariance + ?Sized> {
    cov: &'a C,
    rows: Vec<usize>,
    ncand: usize,
    diag: Vec<f64>,
    target_col: Vec<f64>,
    /// `Θ_{rows, k}` for each selected `k`.
    cache: Vec<Vec<f64>>,
    prec: Vec<f64>,
    active: Vec<bool>,
}

impl<'a, C: Covariance + ?Sized> SingleTargetPrecision<'a, C> {
    pub fn new(cov: &'a C, target: usize, candidates: &[usize]) -> Result<Self> {
        let rows = local_rows(candidates, &[target])?;
        let mut target_col = vec![0.0; rows.len()];
        cov.column(&rows, target, &mut target_col);
        Ok(SingleTargetPrecision {
            cov,
            ncand: candidates.len(),
            diag: rows.iter().map(|&j| cov.diag(j)).collect(),
            rows,
            target_col,
            cache: Vec::new(),
            prec: Vec::new(),
            active: vec![true; candidates.len()],
        })
    }

    /// `Θ_{I,I}⁻¹`, row-major.
    pub fn precision(&self) -> &[f64] {
        &self.prec
    }

    fn gathered(&self, row: usize) -> Vec<f64> {
        self.cache.iter().map(|c| c[row]).collect()
    }

    /// Current `(Θ_{j,j|I}, Θ_{j,Pr|I})` per candidate and `Θ_{Pr,Pr|I}`.
    pub fn conditionals(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let s = self.cache.len();
        let t = self.gathered(self.ncand);
        let target_var = self.diag[self.ncand] - quad(&self.prec, s, &t, &t);
        let mut var = vec![0.0; self.ncand];
        let mut cov = vec![0.0; self.ncand];
        for j in 0..self.ncand {
            let w = self.gathered(j);
            var[j] = self.diag[j] - quad(&self.prec, s, &w, &w);
            cov[j] = self.target_col[j] - quad(&self.prec, s, &w, &t);
        }
        (var, cov, target_var)
    }
}

impl<C: Covariance + ?Sized> GreedyState for SingleTargetPrecision<'_, C> {
    fn best(&self) -> Option<Choice> {
        let (var, cov, target_var) = self.conditionals();
        best_single(
            self.ncand,
            &self.active,
            &self.rows,
            &self.diag,
            &var,
            &cov,
            target_var,
        )
    }

    fn select(&mut self, local: usize) -> Result<()> {
        let s = self.cache.len();
        let w = self.gathered(local);
        precision_append(&mut self.prec, s, &w, self.diag[local])?;
        let mut col = vec![0.0; self.rows.len()];
        self.cov.column(&self.rows, self.rows[local], &mut col);
        self.cache.push(col);
        self.active[local] = false;
        Ok(())
    }

    fn objective(&self) -> f64 {
        let s = self.cache.len();
        let t = self.gathered(self.ncand);
        self.diag[self.ncand] - quad(&self.prec, s, &t, &t)
    }

    fn exclude(&mut self, local: usize) {
        self.active[local] = false;
    }
}
