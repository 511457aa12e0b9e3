use nalgebra::DMatrix;

use super::single::{precision_append, quad};
use super::{better, local_rows, Choice, CholeskyColumns, GreedyState, ELIGIBLE_VARIANCE};
use crate::dense::cholesky;
use crate::kernel::Covariance;
use crate::{Error, Result};

fn require_targets(targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        Err(Error::InvalidParameter(
            "multiple-target selection needs at least one target".into(),
        ))
    } else {
        Ok(())
    }
}

/// Picks the candidate with the smallest `Θ_{j,j|I,Pr} / Θ_{j,j|I}`.
fn best_ratio(
    active: &[bool],
    rows: &[usize],
    diag: &[f64],
    cond_var: &[f64],
    cond_var_pr: &[f64],
    logdet: f64,
) -> Option<Choice> {
    let mut best: Option<(f64, usize)> = None;
    let mut best_local = 0;
    for j in 0..active.len() {
        if !active[j] || !(cond_var[j] > ELIGIBLE_VARIANCE * diag[j]) {
            continue;
        }
        let ratio = cond_var_pr[j].max(0.0) / cond_var[j];
        if better(ratio, rows[j], best, false) {
            best = Some((ratio, rows[j]));
            best_local = j;
        }
    }
    best.map(|(ratio, global)| Choice {
        local: best_local,
        global,
        objective: logdet + ratio.ln(),
        decrease: -ratio.ln(),
    })
}

/// Multiple-target selection with two partial factors: one conditioned on
/// the selected set only, one additionally conditioned on all targets.
///
/// By the matrix determinant lemma the ratio of the two conditional
/// variances of a candidate is the factor by which `det Θ_{Pr,Pr|I}` shrinks
/// when it is added.
pub struct MultiTargetState<'a, C: Covariance + ?Sized> {
    cov: &'a C,
    factor: CholeskyColumns,
    factor_pr: CholeskyColumns,
    diag: Vec<f64>,
    cond_var: Vec<f64>,
    cond_var_pr: Vec<f64>,
    logdet: f64,
    active: Vec<bool>,
}

impl<'a, C: Covariance + ?Sized> MultiTargetState<'a, C> {
    pub fn new(cov: &'a C, targets: &[usize], candidates: &[usize]) -> Result<Self> {
        require_targets(targets)?;
        let rows = local_rows(candidates, targets)?;
        let ncand = candidates.len();
        let diag: Vec<f64> = candidates.iter().map(|&j| cov.diag(j)).collect();
        let mut factor_pr = CholeskyColumns::new(rows.clone());
        let mut cond_var_pr = diag.clone();
        let mut logdet = 0.0;
        for t in 0..targets.len() {
            let u = factor_pr.append(cov, ncand + t)?;
            logdet += 2.0 * u[ncand + t].ln();
            for (v, x) in cond_var_pr.iter_mut().zip(u) {
                *v -= x * x;
            }
        }
        Ok(MultiTargetState {
            cov,
            factor: CholeskyColumns::new(rows),
            factor_pr,
            cond_var: diag.clone(),
            diag,
            cond_var_pr,
            logdet,
            active: vec![true; ncand],
        })
    }

    pub fn cond_var(&self) -> &[f64] {
        &self.cond_var
    }

    /// `Θ_{j,j|I,Pr}` per candidate.
    pub fn cond_var_pr(&self) -> &[f64] {
        &self.cond_var_pr
    }

    /// `log det Θ_{Pr,Pr|I}`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }
}

impl<C: Covariance + ?Sized> GreedyState for MultiTargetState<'_, C> {
    fn best(&self) -> Option<Choice> {
        best_ratio(
            &self.active,
            self.factor.rows(),
            &self.diag,
            &self.cond_var,
            &self.cond_var_pr,
            self.logdet,
        )
    }

    fn select(&mut self, local: usize) -> Result<()> {
        let ratio = self.cond_var_pr[local].max(0.0) / self.cond_var[local];
        let u = self.factor.append(self.cov, local)?;
        for (v, x) in self.cond_var.iter_mut().zip(u) {
            *v -= x * x;
        }
        // A candidate already determined by the targets adds nothing to the
        // target-conditioned factor.
        if self.cond_var_pr[local] > ELIGIBLE_VARIANCE * self.diag[local] {
            let u = self.factor_pr.append(self.cov, local)?;
            for (v, x) in self.cond_var_pr.iter_mut().zip(u) {
                *v -= x * x;
            }
        }
        self.logdet += ratio.ln();
        self.active[local] = false;
        Ok(())
    }

    fn objective(&self) -> f64 {
        self.logdet
    }

    fn exclude(&mut self, local: usize) {
        self.active[local] = false;
    }
}

/// Multiple-target selection maintaining `Θ_{I,I}⁻¹` and `Θ_{Pr,Pr|I}⁻¹`.
pub struct MultiTargetPrecision<'a, C: Covariance + ?Sized> {
    cov: &'a C,
    rows: Vec<usize>,
    ncand: usize,
    m: usize,
    diag: Vec<f64>,
    target_cols: Vec<Vec<f64>>,
    cache: Vec<Vec<f64>>,
    prec: Vec<f64>,
    prec_pr: Vec<f64>,
    logdet: f64,
    active: Vec<bool>,
}

impl<'a, C: Covariance + ?Sized> MultiTargetPrecision<'a, C> {
    pub fn new(cov: &'a C, targets: &[usize], candidates: &[usize]) -> Result<Self> {
        require_targets(targets)?;
        let rows = local_rows(candidates, targets)?;
        let m = targets.len();
        let target_cols: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| {
                let mut col = vec![0.0; rows.len()];
                cov.column(&rows, t, &mut col);
                col
            })
            .collect();
        let block = cov.block(targets, targets);
        let chol = cholesky(&block, "target covariance block")?;
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv: DMatrix<f64> = chol.inverse();
        Ok(MultiTargetPrecision {
            cov,
            ncand: candidates.len(),
            m,
            diag: rows.iter().map(|&j| cov.diag(j)).collect(),
            rows,
            target_cols,
            cache: Vec::new(),
            prec: Vec::new(),
            prec_pr: inv.transpose().as_slice().to_vec(),
            logdet,
            active: vec![true; candidates.len()],
        })
    }

    /// `Θ_{Pr,Pr|I}⁻¹`, row-major.
    pub fn precision_pr(&self) -> &[f64] {
        &self.prec_pr
    }

    /// `Θ_{I,I}⁻¹`, row-major.
    pub fn precision(&self) -> &[f64] {
        &self.prec
    }

    fn gathered(&self, row: usize) -> Vec<f64> {
        self.cache.iter().map(|c| c[row]).collect()
    }

    /// `P Θ_{I,t}` for every target.
    fn projected_targets(&self) -> Vec<Vec<f64>> {
        let s = self.cache.len();
        (0..self.m)
            .map(|t| {
                let g = self.gathered(self.ncand + t);
                (0..s)
                    .map(|a| (0..s).map(|b| self.prec[a * s + b] * g[b]).sum())
                    .collect()
            })
            .collect()
    }

    /// `(Θ_{j,j|I}, Θ_{Pr,j|I})` for candidate `j`.
    fn conditional(&self, j: usize, projected: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let s = self.cache.len();
        let w = self.gathered(j);
        let var = self.diag[j] - quad(&self.prec, s, &w, &w);
        let c = (0..self.m)
            .map(|t| {
                self.target_cols[t][j] - w.iter().zip(&projected[t]).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (var, c)
    }
}

impl<C: Covariance + ?Sized> GreedyState for MultiTargetPrecision<'_, C> {
    fn best(&self) -> Option<Choice> {
        let projected = self.projected_targets();
        let mut var = vec![0.0; self.ncand];
        let mut var_pr = vec![0.0; self.ncand];
        for j in 0..self.ncand {
            if !self.active[j] {
                continue;
            }
            let (v, c) = self.conditional(j, &projected);
            var[j] = v;
            var_pr[j] = v - quad(&self.prec_pr, self.m, &c, &c);
        }
        best_ratio(
            &self.active,
            &self.rows,
            &self.diag[..self.ncand],
            &var,
            &var_pr,
            self.logdet,
        )
    }

    fn select(&mut self, local: usize) -> Result<()> {
        let projected = self.projected_targets();
        let (var, c) = self.conditional(local, &projected);
        let m = self.m;
        let qc: Vec<f64> = (0..m)
            .map(|a| (0..m).map(|b| self.prec_pr[a * m + b] * c[b]).sum())
            .collect();
        let den = var - c.iter().zip(&qc).map(|(x, y)| x * y).sum::<f64>();
        if !(den > 0.0) || !(var > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "conditioned target block became singular".into(),
            ));
        }
        for a in 0..m {
            for b in 0..m {
                self.prec_pr[a * m + b] += qc[a] * qc[b] / den;
            }
        }
        self.logdet += (den / var).ln();

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
        self.logdet
    }

    fn exclude(&mut self, local: usize) {
        self.active[local] = false;
    }
}
