//! KL-minimizing sparse inverse-Cholesky factorization.
//!
//! All indices inside a factorization are ordering positions: points are
//! permuted so that position `i` is point `i`, and column `i` may only hold
//! rows `j ≥ i`.

mod entries;
mod global;
mod sparse;

use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use entries::{aggregate_supernodes, aggregated_entries, column_entries};
pub use global::{global_allocate, global_allocate_groups};
pub use sparse::{SparseFactor, SparsityPattern};

use crate::kernel::{Covariance, KernelCovariance, KernelSpec, PointSet};
use crate::ordering::{knn_candidates, reverse_maximin, rho_ball_candidates, Ordering};
use crate::select::{select_multi, select_partial, select_single};
use crate::{Error, Result};

/// How the sparsity pattern is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// All successors within `ρ ℓᵢ`.
    RhoBall,
    /// The `kᵢ` nearest successors.
    Knn,
    /// Single-target conditional selection from the `ρ_s ρ` ball.
    Select,
    /// Supernodes sharing the union of their members' `ρ`-balls.
    RhoBallAgg,
    /// Supernodes with partial selection: candidates may fall between members.
    SelectAgg,
    /// Supernodes with multiple-target selection restricted to candidates
    /// after every member.
    SelectAggContiguous,
    /// Single-column selection with a global nonzero budget.
    SelectGlobal,
    /// Supernodes with partial selection and a global nonzero budget.
    SelectAggGlobal,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::RhoBall,
        Method::Knn,
        Method::Select,
        Method::RhoBallAgg,
        Method::SelectAgg,
        Method::SelectAggContiguous,
        Method::SelectGlobal,
        Method::SelectAggGlobal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RhoBall => "rho_ball",
            Method::Knn => "knn",
            Method::Select => "select",
            Method::RhoBallAgg => "rho_ball_agg",
            Method::SelectAgg => "select_agg",
            Method::SelectAggContiguous => "select_agg_contiguous",
            Method::SelectGlobal => "select_global",
            Method::SelectAggGlobal => "select_agg_global",
        }
    }

    pub fn is_aggregated(self) -> bool {
        matches!(
            self,
            Method::RhoBallAgg | Method::SelectAgg | Method::SelectAggContiguous | Method::SelectAggGlobal
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorParams {
    /// Radius multiplier of the geometric baseline.
    pub rho: f64,
    /// Candidate enlargement for conditional selection.
    pub rho_s: f64,
    /// Supernode size parameter.
    pub lambda: f64,
    /// Off-diagonal entries per column; `None` matches the `ρ`-ball sizes.
    pub k: Option<usize>,
    /// Maximin order.
    pub p: usize,
    /// Index placed last in the ordering.
    pub seed: Option<usize>,
    /// Total nonzeros for the global methods; `None` matches the baseline.
    pub total_nnz: Option<usize>,
}

impl Default for FactorParams {
    fn default() -> Self {
        FactorParams {
            rho: 2.0,
            rho_s: 2.0,
            lambda: 1.5,
            k: None,
            p: 1,
            seed: None,
            total_nnz: None,
        }
    }
}

impl FactorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 1.0) || !(self.rho_s >= 1.0) || !(self.lambda >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need ρ ≥ 1, ρ_s ≥ 1, λ ≥ 1 (got ρ={}, ρ_s={}, λ={})",
                self.rho, self.rho_s, self.lambda
            )));
        }
        if self.k == Some(0) || self.p == 0 {
            return Err(Error::InvalidParameter("k and p must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub ordering: Duration,
    pub selection: Duration,
    pub entries: Duration,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.ordering + self.selection + self.entries
    }
}

#[derive(Debug, Clone)]
pub struct FactorOutput {
    pub factor: SparseFactor,
    pub pattern: SparsityPattern,
    pub ordering: Ordering,
    pub timings: Timings,
}

/// Orders `points` by reverse maximin and factorizes their kernel matrix.
pub fn factorize(spec: &KernelSpec, points: &PointSet, method: Method, params: &FactorParams) -> Result<FactorOutput> {
    let start = Instant::now();
    let ordering = reverse_maximin(points, params.p, params.seed)?;
    let elapsed = start.elapsed();
    let mut out = factorize_with_ordering(spec, points, ordering, method, params)?;
    out.timings.ordering = elapsed;
    Ok(out)
}

/// Factorizes with a precomputed ordering.
pub fn factorize_with_ordering(
    spec: &KernelSpec,
    points: &PointSet,
    ordering: Ordering,
    method: Method,
    params: &FactorParams,
) -> Result<FactorOutput> {
    spec.validate()?;
    params.validate()?;
    if ordering.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: ordering.len(),
        });
    }
    let permuted = ordering.permute(points);
    let cov = KernelCovariance::new(spec, &permuted);

    let start = Instant::now();
    let pattern = build_pattern(&cov, &ordering, &permuted, method, params)?;
    let selection = start.elapsed();

    let start = Instant::now();
    let factor = compute_entries(&cov, &pattern, ordering.perm().to_vec())?;
    let entries = start.elapsed();

    Ok(FactorOutput {
        factor,
        pattern,
        ordering,
        timings: Timings {
            ordering: Duration::ZERO,
            selection,
            entries,
        },
    })
}

/// Fills a pattern with KL-optimal values, sharing one factorization per
/// supernode when the pattern is aggregated.
pub fn compute_entries<C: Covariance + ?Sized>(
    cov: &C,
    pattern: &SparsityPattern,
    perm: Vec<usize>,
) -> Result<SparseFactor> {
    let n = pattern.len();
    let values: Vec<Vec<f64>> = match pattern.groups() {
        None => (0..n)
            .into_par_iter()
            .map(|i| column_entries(cov, pattern.column(i)))
            .collect::<Result<_>>()?,
        Some(groups) => {
            let per_group: Vec<Vec<Vec<f64>>> = groups
                .par_iter()
                .map(|g| {
                    let first = *g.iter().min().expect("nonempty group");
                    aggregated_entries(cov, g, pattern.column(first))
                })
                .collect::<Result<_>>()?;
            let mut values = vec![Vec::new(); n];
            for (g, vals) in groups.iter().zip(per_group) {
                for (&i, v) in g.iter().zip(vals) {
                    values[i] = v;
                }
            }
            values
        }
    };
    SparseFactor::from_columns(pattern, values, perm)
}

/// Sorted union of `{i} ∪ rest`.
fn with_diagonal(i: usize, mut rest: Vec<usize>) -> Vec<usize> {
    rest.push(i);
    rest.sort_unstable();
    rest.dedup();
    rest
}

fn sorted_union<'a>(sets: impl Iterator<Item = &'a Vec<usize>>) -> Vec<usize> {
    let mut all: Vec<usize> = sets.flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    all
}

fn build_pattern(
    cov: &KernelCovariance<'_>,
    ordering: &Ordering,
    permuted: &PointSet,
    method: Method,
    params: &FactorParams,
) -> Result<SparsityPattern> {
    let n = ordering.len();
    let natural = Ordering::from_parts((0..n).collect(), ordering.length_scales().to_vec(), ordering.p())?;
    let ball = |i: usize, rho: f64| rho_ball_candidates(&natural, permuted, i, rho);
    let baseline: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| with_diagonal(i, ball(i, params.rho)))
        .collect();
    let budget = |i: usize| params.k.unwrap_or(baseline[i].len() - 1);
    let wide = || -> Vec<Vec<usize>> {
        (0..n)
            .into_par_iter()
            .map(|i| ball(i, params.rho * params.rho_s))
            .collect()
    };

    match method {
        Method::RhoBall => SparsityPattern::new(baseline),
        Method::Knn => {
            let cols = (0..n)
                .into_par_iter()
                .map(|i| with_diagonal(i, knn_candidates(&natural, permuted, i, budget(i))))
                .collect();
            SparsityPattern::new(cols)
        }
        Method::Select => {
            let cand = wide();
            let cols = (0..n)
                .into_par_iter()
                .map(|i| select_single(cov, i, &cand[i], budget(i)).map(|s| with_diagonal(i, s.indices)))
                .collect::<Result<_>>()?;
            SparsityPattern::new(cols)
        }
        Method::SelectGlobal => {
            let total = params.total_nnz.unwrap_or_else(|| baseline.iter().map(Vec::len).sum());
            global_allocate(cov, &wide(), total)
        }
        Method::RhoBallAgg | Method::SelectAgg | Method::SelectAggContiguous | Method::SelectAggGlobal => {
            let groups = aggregate_supernodes(ordering, &baseline, params.lambda);
            let base_shared: Vec<Vec<usize>> = groups
                .iter()
                .map(|g| sorted_union(g.iter().map(|&i| &baseline[i])))
                .collect();
            if method == Method::RhoBallAgg {
                return SparsityPattern::aggregated(n, groups, &base_shared);
            }
            let cand = wide();
            let group_candidates: Vec<Vec<usize>> = groups
                .iter()
                .map(|g| {
                    let last = *g.iter().max().expect("nonempty group");
                    sorted_union(g.iter().map(|&i| &cand[i]))
                        .into_iter()
                        .filter(|j| !g.contains(j))
                        .filter(|&j| method != Method::SelectAggContiguous || j > last)
                        .collect()
                })
                .collect();
            if method == Method::SelectAggGlobal {
                let total = params.total_nnz.unwrap_or_else(|| {
                    SparsityPattern::aggregated(n, groups.clone(), &base_shared)
                        .map(|p| p.nnz())
                        .unwrap_or(0)
                });
                return global_allocate_groups(cov, &groups, &group_candidates, total);
            }
            let shared: Vec<Vec<usize>> = groups
                .par_iter()
                .zip(&group_candidates)
                .zip(&base_shared)
                .map(|((g, c), base)| {
                    let s = base.len() - g.len();
                    let sel = if method == Method::SelectAgg {
                        select_partial(cov, g, c, s)?
                    } else {
                        select_multi(cov, g, c, s)?
                    };
                    Ok(sorted_union([g.clone(), sel.indices].iter()))
                })
                .collect::<Result<_>>()?;
            SparsityPattern::aggregated(n, groups, &shared)
        }
    }
}

#[cfg(test)]
mod tests;
