//! Recovery of planted sparse Cholesky factors.
//!
//! A random lower-triangular `L` (natural order) is planted, `Q = L Lᵀ` is
//! formed, and each method tries to find the pattern of `L` column by column
//! among the successors of the column.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::dense::inverse_general;
use crate::factor::{compute_entries, SparsityPattern};
use crate::kernel::MatrixCovariance;
use crate::metrics::{iou, kl_factor_matrix};
use crate::select::{GreedyState, SingleTargetState, ABORT_DECREASE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecoveryMethod {
    /// Conditional selection on `Q⁻¹` read as a covariance.
    Cknn,
    /// Largest `|Q_ij| / √(Q_ii Q_jj)`.
    Corr,
    /// Largest `|Q_ij|`.
    Knn,
    /// Uniformly random successors.
    Random,
}

impl RecoveryMethod {
    pub const ALL: [RecoveryMethod; 4] = [
        RecoveryMethod::Cknn,
        RecoveryMethod::Corr,
        RecoveryMethod::Knn,
        RecoveryMethod::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecoveryMethod::Cknn => "cknn",
            RecoveryMethod::Corr => "corr",
            RecoveryMethod::Knn => "knn",
            RecoveryMethod::Random => "random",
        }
    }
}

impl std::fmt::Display for RecoveryMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecoveryMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown recovery method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub n: usize,
    /// Planted and recovered off-diagonal entries per column.
    pub s: usize,
    pub diag_value: f64,
    /// Variance of the symmetric noise added to `Q`.
    pub noise: f64,
}

impl RecoveryConfig {
    pub fn new(n: usize, s: usize) -> Self {
        RecoveryConfig {
            n,
            s,
            diag_value: 10.0,
            noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.s >= self.n {
            return Err(Error::InvalidParameter(format!("need 0 ≤ s < N (got s={}, N={})", self.s, self.n)));
        }
        if !(self.diag_value > 0.0) || !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need a positive diagonal and finite nonnegative noise (got {}, {})",
                self.diag_value, self.noise
            )));
        }
        Ok(())
    }

    fn budget(&self, i: usize) -> usize {
        self.s.min(self.n - 1 - i)
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub pattern: SparsityPattern,
    pub factor: DMatrix<f64>,
    /// `L Lᵀ` plus noise.
    pub q: DMatrix<f64>,
}

/// Plants `min(s, N−1−i)` standard normal entries below the diagonal of
/// column `i`, with `diag_value` on the diagonal.
pub fn plant_factor(config: &RecoveryConfig, seed: u64) -> Result<Planted> {
    config.validate()?;
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l = DMatrix::zeros(n, n);
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        l[(i, i)] = config.diag_value;
        let mut rows: Vec<usize> = sample(&mut rng, n - 1 - i, config.budget(i))
            .into_iter()
            .map(|r| i + 1 + r)
            .collect();
        rows.sort_unstable();
        for &r in &rows {
            l[(r, i)] = rng.sample(StandardNormal);
        }
        rows.insert(0, i);
        columns.push(rows);
    }
    let mut q = &l * l.transpose();
    if config.noise > 0.0 {
        let normal = Normal::new(0.0, config.noise.sqrt()).expect("finite noise");
        for i in 0..n {
            for j in i..n {
                let e = normal.sample(&mut rng);
                q[(i, j)] += e;
                if j != i {
                    q[(j, i)] += e;
                }
            }
        }
    }
    Ok(Planted {
        pattern: SparsityPattern::new(columns)?,
        factor: l,
        q,
    })
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub pattern: SparsityPattern,
    pub iou: f64,
    /// Columns whose selection stopped on a loss of positive-definiteness.
    pub aborted: Vec<usize>,
    /// KL divergence of the KL-optimal factor on the recovered pattern from
    /// `Q⁻¹`, when `Q⁻¹` is positive-definite.
    pub kl: Option<f64>,
}

/// Greedy conditional selection for one column, keeping whatever was chosen
/// before a failure.
fn cknn_column(cov: &MatrixCovariance, i: usize, candidates: &[usize], budget: usize) -> (Vec<usize>, bool) {
    let Ok(mut state) = SingleTargetState::new(cov, i, candidates) else {
        return (Vec::new(), true);
    };
    let mut chosen = Vec::with_capacity(budget);
    while chosen.len() < budget {
        let Some(choice) = state.best() else { break };
        if !(choice.decrease > ABORT_DECREASE) {
            break;
        }
        if state.select(choice.local).is_err() {
            return (chosen, true);
        }
        chosen.push(choice.global);
    }
    (chosen, false)
}

/// Indices of `candidates` with the `k` largest scores, ties to the smaller
/// index.
fn top_k(candidates: &[usize], k: usize, score: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates.iter().map(|&j| (score(j), j)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Recovers a pattern from `q` with one method. `seed` drives the random
/// baseline only.
pub fn recover_pattern(
    q: &DMatrix<f64>,
    config: &RecoveryConfig,
    method: RecoveryMethod,
    seed: u64,
) -> Result<(SparsityPattern, Vec<usize>)> {
    config.validate()?;
    let n = config.n;
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.nrows() });
    }
    let cov = match method {
        RecoveryMethod::Cknn => Some(MatrixCovariance::new(inverse_general(q)?)?),
        _ => None,
    };
    let results: Vec<(Vec<usize>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let succ: Vec<usize> = (i + 1..n).collect();
            let budget = config.budget(i);
            match method {
                RecoveryMethod::Cknn => cknn_column(cov.as_ref().expect("covariance"), i, &succ, budget),
                RecoveryMethod::Corr => (
                    top_k(&succ, budget, |j| q[(i, j)].abs() / (q[(i, i)] * q[(j, j)]).abs().sqrt()),
                    false,
                ),
                RecoveryMethod::Knn => (top_k(&succ, budget, |j| q[(i, j)].abs()), false),
                RecoveryMethod::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let picks = sample(&mut rng, succ.len(), budget).into_iter().map(|r| succ[r]).collect();
                    (picks, false)
                }
            }
        })
        .collect();
    let mut aborted = Vec::new();
    let columns = results
        .into_iter()
        .enumerate()
        .map(|(i, (mut rows, failed))| {
            if failed {
                aborted.push(i);
            }
            rows.push(i);
            rows.sort_unstable();
            rows
        })
        .collect();
    Ok((SparsityPattern::new(columns)?, aborted))
}

/// Runs one method against a planted instance and scores it.
pub fn evaluate(planted: &Planted, config: &RecoveryConfig, method: RecoveryMethod, seed: u64) -> Result<RecoveryReport> {
    let (pattern, aborted) = recover_pattern(&planted.q, config, method, seed)?;
    let score = iou(&pattern, &planted.pattern);
    let kl = inverse_general(&planted.q)
        .and_then(MatrixCovariance::new)
        .and_then(|cov| {
            let factor = compute_entries(&cov, &pattern, (0..config.n).collect())?;
            kl_factor_matrix(&cov, &factor)
        })
        .ok()
        .filter(|v| v.is_finite());
    Ok(RecoveryReport {
        pattern,
        iou: score,
        aborted,
        kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_entries_gives_a_scaled_identity() {
        let cfg = RecoveryConfig::new(6, 0);
        let p = plant_factor(&cfg, 1).unwrap();
        assert_eq!(p.q, DMatrix::identity(6, 6) * 100.0);
        assert_eq!(p.pattern.nnz(), 6);
    }

    #[test]
    fn planting_is_reproducible_and_positive_definite() {
        let cfg = RecoveryConfig::new(8, 2);
        let a = plant_factor(&cfg, 7).unwrap();
        let b = plant_factor(&cfg, 7).unwrap();
        assert_eq!(a.pattern, b.pattern);
        assert_eq!(a.q, b.q);
        for i in 0..8 {
            assert_eq!(a.pattern.column(i).len(), 1 + 2usize.min(7 - i));
        }
        let eig = a.q.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        let diff = &a.factor * a.factor.transpose() - &a.q;
        assert!(diff.amax() < 1e-12);
    }

    #[test]
    fn noise_is_symmetric() {
        let mut cfg = RecoveryConfig::new(10, 3);
        cfg.noise = 0.1;
        let p = plant_factor(&cfg, 3).unwrap();
        assert_eq!(p.q, p.q.transpose());
        let clean = plant_factor(&RecoveryConfig::new(10, 3), 3).unwrap();
        assert_eq!(p.pattern, clean.pattern);
        assert!((&p.q - &clean.q).amax() > 0.0);
    }

    #[test]
    fn conditional_selection_recovers_small_plants() {
        let cfg = RecoveryConfig::new(40, 4);
        let p = plant_factor(&cfg, 11).unwrap();
        let r = evaluate(&p, &cfg, RecoveryMethod::Cknn, 0).unwrap();
        assert!(r.iou > 0.9, "iou {}", r.iou);
        assert!(r.aborted.is_empty());
        let exact = r.kl.unwrap();
        let rand = evaluate(&p, &cfg, RecoveryMethod::Random, 0).unwrap();
        assert!(rand.iou < r.iou);
        assert!(rand.kl.unwrap() > exact);
    }

    #[test]
    fn nearly_dense_plants_are_easy_for_everyone() {
        let cfg = RecoveryConfig::new(16, 14);
        let p = plant_factor(&cfg, 5).unwrap();
        for m in RecoveryMethod::ALL {
            let r = evaluate(&p, &cfg, m, 1).unwrap();
            assert!(r.iou > 0.8, "{m}: {}", r.iou);
        }
    }

    #[test]
    fn baselines_rank_by_score() {
        let q = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -3.0, 1.0, 1.0, 0.0, -3.0, 0.0, 9.0]);
        let cfg = RecoveryConfig::new(3, 1);
        let (knn, _) = recover_pattern(&q, &cfg, RecoveryMethod::Knn, 0).unwrap();
        assert_eq!(knn.column(0), &[0, 2]);
        // correlations 1/2 and 3/6 tie; the smaller index wins
        let (corr, _) = recover_pattern(&q, &cfg, RecoveryMethod::Corr, 0).unwrap();
        assert_eq!(corr.column(0), &[0, 1]);
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(plant_factor(&RecoveryConfig::new(4, 4), 0).is_err());
        let mut cfg = RecoveryConfig::new(4, 1);
        cfg.noise = -1.0;
        assert!(plant_factor(&cfg, 0).is_err());
    }
}
