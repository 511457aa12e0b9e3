//! Greedy conditional selection.
//!
//! Every selector works on a compact local numbering: rows `0..n` are the
//! candidates followed by the targets, and the state keeps only the columns
//! of the selected/target indices. Kernel entries are read through
//! [`Covariance`], so the same code serves kernel and explicit matrices.
//!
//! The greedy loop is shared: each state reports its best eligible choice as
//! a log-scale objective decrease, and selection stops at the budget, when
//! no candidate is eligible, or when the best decrease is negligible.

mod chol;
mod multi;
mod partial;
mod single;

pub use chol::CholeskyColumns;
pub use multi::{MultiTargetPrecision, MultiTargetState};
pub use partial::{GluedFactor, PartialState};
pub use single::{SingleTargetPrecision, SingleTargetState};

use crate::kernel::Covariance;
use crate::{Error, Result};

/// A candidate is eligible only while its conditional variance exceeds this
/// fraction of its prior variance.
pub const ELIGIBLE_VARIANCE: f64 = 1e-12;

/// Selection stops once the best log-objective decrease is at most this.
pub const ABORT_DECREASE: f64 = 1e-12;

/// The outcome of a greedy selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected global indices in selection order.
    pub indices: Vec<usize>,
    /// Objective before any selection.
    pub initial: f64,
    /// Objective after each round.
    pub objective: Vec<f64>,
}

/// The best move a state can make next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub local: usize,
    pub global: usize,
    /// Objective value after taking this candidate.
    pub objective: f64,
    /// Decrease of the log objective (nonnegative up to rounding).
    pub decrease: f64,
}

pub trait GreedyState {
    fn best(&self) -> Option<Choice>;
    fn select(&mut self, local: usize) -> Result<()>;
    fn objective(&self) -> f64;
    /// Removes a candidate from consideration without selecting it.
    fn exclude(&mut self, local: usize);
}

/// Runs `state` greedily for at most `budget` rounds.
pub fn run_greedy<S: GreedyState>(state: &mut S, budget: usize) -> Result<Selection> {
    let initial = state.objective();
    let mut indices = Vec::with_capacity(budget);
    let mut objective = Vec::with_capacity(budget);
    while indices.len() < budget {
        let Some(choice) = state.best() else { break };
        if !(choice.decrease > ABORT_DECREASE) {
            break;
        }
        state.select(choice.local)?;
        indices.push(choice.global);
        objective.push(state.objective());
    }
    Ok(Selection {
        indices,
        initial,
        objective,
    })
}

/// Greedy single-target selection with partial Cholesky columns.
pub fn select_single<C: Covariance + ?Sized>(
    cov: &C,
    target: usize,
    candidates: &[usize],
    budget: usize,
) -> Result<Selection> {
    let mut state = SingleTargetState::new(cov, target, candidates)?;
    run_greedy(&mut state, budget)
}

/// Greedy single-target selection with an explicit precision matrix.
pub fn select_single_prec<C: Covariance + ?Sized>(
    cov: &C,
    target: usize,
    candidates: &[usize],
    budget: usize,
) -> Result<Selection> {
    let mut state = SingleTargetPrecision::new(cov, target, candidates)?;
    run_greedy(&mut state, budget)
}

/// Greedy selection minimizing `log det Θ_{Pr,Pr|I}` with two partial factors.
pub fn select_multi<C: Covariance + ?Sized>(
    cov: &C,
    targets: &[usize],
    candidates: &[usize],
    budget: usize,
) -> Result<Selection> {
    let mut state = MultiTargetState::new(cov, targets, candidates)?;
    run_greedy(&mut state, budget)
}

/// Multiple-target selection with explicit precisions.
pub fn select_multi_prec<C: Covariance + ?Sized>(
    cov: &C,
    targets: &[usize],
    candidates: &[usize],
    budget: usize,
) -> Result<Selection> {
    let mut state = MultiTargetPrecision::new(cov, targets, candidates)?;
    run_greedy(&mut state, budget)
}

/// Partial selection: a candidate conditions only the targets that precede
/// it. Global indices double as ordering positions (larger = later).
pub fn select_partial<C: Covariance + ?Sized>(
    cov: &C,
    targets: &[usize],
    candidates: &[usize],
    budget: usize,
) -> Result<Selection> {
    let mut state = PartialState::new(cov, targets, candidates)?;
    run_greedy(&mut state, budget)
}

/// Local row list `candidates ++ targets`, rejecting overlaps and repeats.
fn local_rows(candidates: &[usize], targets: &[usize]) -> Result<Vec<usize>> {
    let mut rows = Vec::with_capacity(candidates.len() + targets.len());
    rows.extend_from_slice(candidates);
    rows.extend_from_slice(targets);
    let mut sorted = rows.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(
            "candidates and targets must be distinct indices".into(),
        ));
    }
    Ok(rows)
}

/// `a` beats `b` when strictly better, or equal with a smaller global index.
#[inline]
fn better(score: f64, global: usize, best: Option<(f64, usize)>, maximize: bool) -> bool {
    match best {
        None => true,
        Some((s, g)) => {
            if maximize {
                score > s || (score == s && global < g)
            } else {
                score < s || (score == s && global < g)
            }
        }
    }
}
