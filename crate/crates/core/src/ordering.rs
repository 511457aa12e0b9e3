//! Reverse p-maximin ordering and per-column candidate sets.
//!
//! Positions run `0..N` from the finest point (chosen last) to the coarsest
//! (chosen first). Column `i` of a factor may only hold rows at positions
//! after `i`, so all candidate sets here are returned as positions.

use crate::kernel::{distance, PointSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    perm: Vec<usize>,
    position: Vec<usize>,
    length_scales: Vec<f64>,
    p: usize,
}

impl Ordering {
    /// Builds an ordering from an explicit permutation (position → raw index)
    /// and length scales stored by position.
    pub fn from_parts(perm: Vec<usize>, length_scales: Vec<f64>, p: usize) -> Result<Self> {
        let n = perm.len();
        if length_scales.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: length_scales.len(),
            });
        }
        let mut position = vec![usize::MAX; n];
        for (pos, &raw) in perm.iter().enumerate() {
            if raw >= n || position[raw] != usize::MAX {
                return Err(Error::InvalidParameter("ordering is not a permutation".into()));
            }
            position[raw] = pos;
        }
        Ok(Ordering {
            perm,
            position,
            length_scales,
            p,
        })
    }

    /// The identity ordering with infinite length scales.
    pub fn natural(n: usize) -> Self {
        Ordering {
            perm: (0..n).collect(),
            position: (0..n).collect(),
            length_scales: vec![f64::INFINITY; n],
            p: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Raw point index at each position.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn position_of(&self, raw: usize) -> usize {
        self.position[raw]
    }

    /// ℓ by position.
    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn length_scale(&self, pos: usize) -> f64 {
        self.length_scales[pos]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// The points rearranged so that raw index equals position.
    pub fn permute(&self, points: &PointSet) -> PointSet {
        points.select(&self.perm)
    }
}

/// Reverse p-maximin ordering. The last position holds `seed` (default: the
/// point closest to the coordinate-wise mean); each earlier position holds the
/// point whose p-th smallest distance to the already chosen points is largest.
pub fn reverse_maximin(points: &PointSet, p: usize, seed: Option<usize>) -> Result<Ordering> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidParameter("cannot order an empty point set".into()));
    }
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!(
            "maximin order p must lie in 1..={n} (got {p})"
        )));
    }
    let seed = match seed {
        Some(s) if s >= n => {
            return Err(Error::InvalidParameter(format!("seed index {s} out of range")))
        }
        Some(s) => s,
        None => closest_to_mean(points),
    };
    Ok(maximin_core(points, p, Some(seed), None))
}

/// Reverse p-maximin ordering of `points` treating every point of `fixed` as
/// already chosen. Used to place prediction points before training points:
/// the prediction block is ordered with the training block acting as the
/// coarser level, so every length scale is finite.
pub fn reverse_maximin_after(points: &PointSet, fixed: &PointSet, p: usize) -> Result<Ordering> {
    if fixed.is_empty() {
        return reverse_maximin(points, p, None);
    }
    if points.dim() != fixed.dim() {
        return Err(Error::DimensionMismatch {
            expected: fixed.dim(),
            got: points.dim(),
        });
    }
    if p == 0 {
        return Err(Error::InvalidParameter("maximin order p must be positive".into()));
    }
    Ok(maximin_core(points, p, None, Some(fixed)))
}

fn closest_to_mean(points: &PointSet) -> usize {
    let n = points.len();
    let mut mean = vec![0.0; points.dim()];
    for i in 0..n {
        for (m, c) in mean.iter_mut().zip(points.point(i)) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let d = distance(points.point(i), &mean);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Keeps the p smallest distances seen so far, ascending.
struct Nearest {
    p: usize,
    dists: Vec<f64>,
}

impl Nearest {
    fn insert(&mut self, d: f64) {
        if self.dists.len() == self.p && d >= self.dists[self.p - 1] {
            return;
        }
        let at = self.dists.partition_point(|&x| x <= d);
        self.dists.insert(at, d);
        self.dists.truncate(self.p);
    }

    fn key(&self) -> f64 {
        if self.dists.len() < self.p {
            f64::INFINITY
        } else {
            self.dists[self.p - 1]
        }
    }
}

fn maximin_core(points: &PointSet, p: usize, seed: Option<usize>, fixed: Option<&PointSet>) -> Ordering {
    let n = points.len();
    let mut near: Vec<Nearest> = (0..n)
        .map(|_| Nearest {
            p,
            dists: Vec::with_capacity(p + 1),
        })
        .collect();
    if let Some(fixed) = fixed {
        for (i, nr) in near.iter_mut().enumerate() {
            for f in 0..fixed.len() {
                nr.insert(distance(points.point(i), fixed.point(f)));
            }
        }
    }

    let mut chosen = vec![false; n];
    let mut perm = vec![0; n];
    let mut ell = vec![0.0; n];

    for pos in (0..n).rev() {
        let pick = match (pos == n - 1, seed) {
            (true, Some(s)) => s,
            _ => {
                let mut best = usize::MAX;
                let mut best_key = f64::NEG_INFINITY;
                for i in 0..n {
                    if !chosen[i] && near[i].key() > best_key {
                        best_key = near[i].key();
                        best = i;
                    }
                }
                best
            }
        };
        perm[pos] = pick;
        ell[pos] = near[pick].key();
        chosen[pick] = true;
        let xp = points.point(pick);
        for i in 0..n {
            if !chosen[i] {
                near[i].insert(distance(points.point(i), xp));
            }
        }
    }

    let mut position = vec![0; n];
    for (pos, &raw) in perm.iter().enumerate() {
        position[raw] = pos;
    }
    Ordering {
        perm,
        position,
        length_scales: ell,
        p,
    }
}

/// Positions after `i` whose points lie within `rho · ℓᵢ` of point `i`,
/// ascending.
pub fn rho_ball_candidates(ordering: &Ordering, points: &PointSet, i: usize, rho: f64) -> Vec<usize> {
    let radius = rho * ordering.length_scale(i);
    let xi = points.point(ordering.perm[i]);
    (i + 1..ordering.len())
        .filter(|&j| distance(points.point(ordering.perm[j]), xi) <= radius)
        .collect()
}

/// The `k` positions after `i` nearest to point `i` (ties by raw index),
/// returned ascending by position.
pub fn knn_candidates(ordering: &Ordering, points: &PointSet, i: usize, k: usize) -> Vec<usize> {
    let xi = points.point(ordering.perm[i]);
    let mut succ: Vec<(f64, usize, usize)> = (i + 1..ordering.len())
        .map(|j| {
            let raw = ordering.perm[j];
            (distance(points.point(raw), xi), raw, j)
        })
        .collect();
    if k < succ.len() {
        succ.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        succ.truncate(k);
    }
    let mut out: Vec<usize> = succ.into_iter().map(|(_, _, j)| j).collect();
    out.sort_unstable();
    out
}
