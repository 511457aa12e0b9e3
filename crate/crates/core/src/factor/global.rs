use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;

use super::SparsityPattern;
use crate::kernel::Covariance;
use crate::select::{Choice, GreedyState, PartialState, SingleTargetState, ABORT_DECREASE};
use crate::{Error, Result};

/// Heap entry: the best pending candidate of one column or group. Keys are
/// log-objective decreases; ties go to the smaller column.
#[derive(Debug, Clone, Copy)]
struct Entry {
    key: f64,
    owner: usize,
    choice: Choice,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.owner.cmp(&self.owner))
    }
}

fn push_best<S: GreedyState>(heap: &mut BinaryHeap<Entry>, owner: usize, state: &S) {
    if let Some(choice) = state.best() {
        if choice.decrease > ABORT_DECREASE {
            heap.push(Entry {
                key: choice.decrease,
                owner,
                choice,
            });
        }
    }
}

/// Distributes `total_nnz` nonzeros over all columns with one priority queue
/// keyed by the decrease of each column's log posterior variance, i.e. by
/// `−log(1 − Corr[y_i, y_j | I]²)`.
///
/// Column `i` draws from `candidates[i]` (positions after `i`). Each column
/// holds exactly one queue entry, refreshed whenever that column changes.
pub fn global_allocate<C: Covariance + ?Sized>(
    cov: &C,
    candidates: &[Vec<usize>],
    total_nnz: usize,
) -> Result<SparsityPattern> {
    let n = candidates.len();
    if total_nnz < n {
        return Err(Error::InvalidParameter(format!(
            "a budget of {total_nnz} nonzeros cannot cover {n} diagonal entries"
        )));
    }
    let mut states = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| SingleTargetState::new(cov, i, c))
        .collect::<Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::with_capacity(n);
    for (i, state) in states.iter().enumerate() {
        push_best(&mut heap, i, state);
    }
    let mut columns: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut nnz = n;
    while nnz < total_nnz {
        let Some(top) = heap.pop() else { break };
        let state = &mut states[top.owner];
        state.select(top.choice.local)?;
        columns[top.owner].push(top.choice.global);
        nnz += 1;
        push_best(&mut heap, top.owner, state);
    }
    for col in &mut columns {
        col.sort_unstable();
    }
    SparsityPattern::new(columns)
}

/// Group version of [`global_allocate`]: each supernode keeps a partial
/// selection state and the key is the exact decrease of its summed target
/// log variances. A selected point adds one nonzero to every member column
/// before it; picks that would overrun the budget are dropped.
pub fn global_allocate_groups<C: Covariance + ?Sized>(
    cov: &C,
    groups: &[Vec<usize>],
    candidates: &[Vec<usize>],
    total_nnz: usize,
) -> Result<SparsityPattern> {
    let n: usize = groups.iter().map(Vec::len).sum();
    let mut nnz: usize = groups.iter().map(|g| g.len() * (g.len() + 1) / 2).sum();
    if total_nnz < nnz {
        return Err(Error::InvalidParameter(format!(
            "a budget of {total_nnz} nonzeros cannot cover the {nnz} intra-group entries"
        )));
    }
    let mut states = groups
        .iter()
        .zip(candidates)
        .map(|(g, c)| PartialState::new(cov, g, c))
        .collect::<Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::with_capacity(groups.len());
    for (g, state) in states.iter().enumerate() {
        push_best(&mut heap, g, state);
    }
    let mut shared: Vec<Vec<usize>> = groups.to_vec();
    while nnz < total_nnz {
        let Some(top) = heap.pop() else { break };
        let j = top.choice.global;
        let cost = groups[top.owner].iter().filter(|&&t| t < j).count();
        let state = &mut states[top.owner];
        if nnz + cost > total_nnz {
            state.exclude(top.choice.local);
        } else {
            state.select(top.choice.local)?;
            shared[top.owner].push(j);
            nnz += cost;
        }
        push_best(&mut heap, top.owner, state);
    }
    for s in &mut shared {
        s.sort_unstable();
    }
    let groups: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.sort_unstable();
            g
        })
        .collect();
    SparsityPattern::aggregated(n, groups, &shared)
}
