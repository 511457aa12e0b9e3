use super::{better, local_rows, Choice, CholeskyColumns, GreedyState, ELIGIBLE_VARIANCE};
use crate::kernel::Covariance;
use crate::Result;

/// Cholesky columns of the selected points and targets, ordered by
/// descending ordering position (global index).
///
/// Eliminating later points first makes the pivot of each column the
/// variance of its owner conditioned on every later owner, which is exactly
/// what a sparse inverse-Cholesky column sees. Inserting a point therefore
/// leaves the columns of later owners intact and downdates the columns of
/// earlier owners.
#[derive(Debug, Clone)]
pub struct GluedFactor {
    factor: CholeskyColumns,
    owners: Vec<usize>,
}

impl GluedFactor {
    pub fn new(rows: Vec<usize>) -> Self {
        GluedFactor {
            factor: CholeskyColumns::new(rows),
            owners: Vec::new(),
        }
    }

    pub fn rows(&self) -> &[usize] {
        self.factor.rows()
    }

    /// Local rows owning each column, in column order.
    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn ncols(&self) -> usize {
        self.owners.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        self.factor.column(c)
    }

    /// Diagonal entry of column `c`.
    pub fn pivot(&self, c: usize) -> f64 {
        self.factor.get(self.owners[c], c)
    }

    /// First column whose owner precedes local row `k` in the ordering.
    pub fn insert_position(&self, k: usize) -> usize {
        let rows = self.factor.rows();
        let pk = rows[k];
        self.owners.partition_point(|&o| rows[o] > pk)
    }

    /// Inserts local row `k` as a new column, downdating every column of an
    /// earlier owner. Returns the column position.
    pub fn insert<C: Covariance + ?Sized>(&mut self, cov: &C, k: usize) -> Result<usize> {
        let p = self.insert_position(k);
        self.factor.insert_downdate(cov, k, p, &self.owners)?;
        self.owners.insert(p, k);
        Ok(p)
    }
}

/// Partial selection for a group of targets: a candidate conditions only
/// the targets that precede it, and the objective is the sum of target log
/// variances, each conditioned on the later targets and later selections.
pub struct PartialState<'a, C: Covariance + ?Sized> {
    cov: &'a C,
    glued: GluedFactor,
    ncand: usize,
    diag: Vec<f64>,
    objective: f64,
    active: Vec<bool>,
}

impl<'a, C: Covariance + ?Sized> PartialState<'a, C> {
    pub fn new(cov: &'a C, targets: &[usize], candidates: &[usize]) -> Result<Self> {
        let rows = local_rows(candidates, targets)?;
        let ncand = candidates.len();
        let mut glued = GluedFactor::new(rows);
        // descending position so each insert lands at the end
        let mut order: Vec<usize> = (0..targets.len()).collect();
        order.sort_by(|&a, &b| targets[b].cmp(&targets[a]));
        for t in order {
            glued.insert(cov, ncand + t)?;
        }
        let mut state = PartialState {
            cov,
            glued,
            ncand,
            diag: candidates.iter().map(|&j| cov.diag(j)).collect(),
            objective: 0.0,
            active: vec![true; ncand],
        };
        state.objective = state.current_objective();
        Ok(state)
    }

    pub fn glued(&self) -> &GluedFactor {
        &self.glued
    }

    fn current_objective(&self) -> f64 {
        (0..self.glued.ncols())
            .filter(|&c| self.glued.owners()[c] >= self.ncand)
            .map(|c| 2.0 * self.glued.pivot(c).ln())
            .sum()
    }

    /// Objective after inserting each candidate (`+∞` when ineligible or
    /// already selected).
    pub fn scores(&self) -> Vec<f64> {
        let rows = self.glued.rows();
        let n = self.ncand;
        let mut var = self.diag.clone();
        let mut score = vec![self.objective; n];
        let mut entered = vec![false; n];
        let mut dead: Vec<bool> = self.active.iter().map(|a| !a).collect();

        for c in 0..self.glued.ncols() {
            let owner = self.glued.owners()[c];
            let target = owner >= n;
            let po = rows[owner];
            let col = self.glued.column(c);
            for j in 0..n {
                if dead[j] {
                    continue;
                }
                let l = col[j];
                let v = var[j];
                let next = v - l * l;
                if rows[j] > po {
                    if !entered[j] {
                        entered[j] = true;
                        if !(v > ELIGIBLE_VARIANCE * self.diag[j]) {
                            dead[j] = true;
                            continue;
                        }
                    }
                    if !(next > 0.0) {
                        dead[j] = true;
                        continue;
                    }
                    if target {
                        score[j] += (next / v).ln();
                    }
                }
                var[j] = next;
            }
        }
        for j in 0..n {
            if dead[j] || (!entered[j] && !(var[j] > ELIGIBLE_VARIANCE * self.diag[j])) {
                score[j] = f64::INFINITY;
            }
        }
        score
    }
}

impl<C: Covariance + ?Sized> GreedyState for PartialState<'_, C> {
    fn best(&self) -> Option<Choice> {
        let rows = self.glued.rows();
        let scores = self.scores();
        let mut best: Option<(f64, usize)> = None;
        let mut best_local = 0;
        for (j, &s) in scores.iter().enumerate() {
            if s.is_finite() && better(s, rows[j], best, false) {
                best = Some((s, rows[j]));
                best_local = j;
            }
        }
        best.map(|(s, global)| Choice {
            local: best_local,
            global,
            objective: s,
            decrease: self.objective - s,
        })
    }

    fn select(&mut self, local: usize) -> Result<()> {
        self.glued.insert(self.cov, local)?;
        self.objective = self.current_objective();
        self.active[local] = false;
        Ok(())
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn exclude(&mut self, local: usize) {
        self.active[local] = false;
    }
}
