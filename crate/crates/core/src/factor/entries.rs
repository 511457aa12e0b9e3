use nalgebra::DVector;

use crate::dense::{cholesky, reverse_cholesky_upper};
use crate::kernel::Covariance;
use crate::ordering::Ordering;
use crate::{Error, Result};

/// KL-optimal values of one column with row set `s` (its own index first):
/// `Θ_{s,s}⁻¹ e₁ / √(e₁ᵀ Θ_{s,s}⁻¹ e₁)`.
pub fn column_entries<C: Covariance + ?Sized>(cov: &C, s: &[usize]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::InvalidParameter("empty column pattern".into()));
    }
    let block = cov.block(s, s);
    let chol = cholesky(&block, "column covariance block")?;
    let mut e1 = DVector::zeros(s.len());
    e1[0] = 1.0;
    let x = chol.solve(&e1);
    let scale = 1.0 / x[0].sqrt();
    Ok(x.iter().map(|v| v * scale).collect())
}

/// Values of every member column of a group sharing the ascending row set
/// `shared`, from one factorization `U Uᵀ = Θ_{s̃,s̃}` with `U` upper
/// triangular. Column `k` of the factor restricted to its suffix solves
/// `U_{k:,k:}ᵀ x = e₁`.
pub fn aggregated_entries<C: Covariance + ?Sized>(
    cov: &C,
    group: &[usize],
    shared: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let block = cov.block(shared, shared);
    let u = reverse_cholesky_upper(&block)?;
    let n = shared.len();
    group
        .iter()
        .map(|&i| {
            let k = shared.partition_point(|&j| j < i);
            if shared.get(k) != Some(&i) {
                return Err(Error::InvalidParameter(format!(
                    "group member {i} missing from its shared pattern"
                )));
            }
            // forward substitution with Uᵀ (lower triangular) from row k
            let mut x = vec![0.0; n - k];
            for a in k..n {
                let mut s = if a == k { 1.0 } else { 0.0 };
                for b in k..a {
                    s -= u[(b, a)] * x[b - k];
                }
                x[a - k] = s / u[(a, a)];
            }
            Ok(x)
        })
        .collect()
}

/// Supernodes: sweeping positions in order, the first ungrouped `i` forms
/// `{ j ∈ sᵢ : ℓⱼ ≤ λ ℓᵢ, j ungrouped }`.
pub fn aggregate_supernodes(ordering: &Ordering, pattern: &[Vec<usize>], lambda: f64) -> Vec<Vec<usize>> {
    let n = pattern.len();
    let ell = ordering.length_scales();
    let mut grouped = vec![false; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if grouped[i] {
            continue;
        }
        let limit = lambda * ell[i];
        let group: Vec<usize> = pattern[i]
            .iter()
            .copied()
            .filter(|&j| !grouped[j] && (j == i || ell[j] <= limit))
            .collect();
        for &j in &group {
            grouped[j] = true;
        }
        groups.push(group);
    }
    groups
}
