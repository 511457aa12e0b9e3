//! Accuracy metrics.

use std::collections::HashSet;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dense::{cholesky, logdet_spd};
use crate::factor::{SparseFactor, SparsityPattern};
use crate::kernel::{Covariance, KernelCovariance, KernelSpec, PointSet};
use crate::{Error, Result};

/// Largest `N` for which [`kl_factor`] assembles the dense kernel matrix.
pub const DENSE_CAP: usize = 8192;

/// `KL(N(0, Θ₁) ‖ N(0, Θ₂))`.
pub fn kl_dense(theta1: &DMatrix<f64>, theta2: &DMatrix<f64>) -> Result<f64> {
    if theta1.shape() != theta2.shape() || theta1.nrows() != theta1.ncols() {
        return Err(Error::DimensionMismatch {
            expected: theta1.nrows(),
            got: theta2.nrows(),
        });
    }
    let chol2 = cholesky(theta2, "second KL argument")?;
    let trace = chol2.solve(theta1).trace();
    let n = theta1.nrows() as f64;
    Ok(0.5 * (trace + logdet_spd(theta2)? - logdet_spd(theta1)? - n))
}

/// `KL(N(0, Θ) ‖ N(0, (L Lᵀ)⁻¹))` for a KL-optimal factor. The trace term
/// equals `N` for such factors, leaving `−½ (log det L Lᵀ + log det Θ)`.
pub fn kl_factor(spec: &KernelSpec, points: &PointSet, factor: &SparseFactor) -> Result<f64> {
    kl_factor_with_cap(spec, points, factor, DENSE_CAP)
}

pub fn kl_factor_with_cap(spec: &KernelSpec, points: &PointSet, factor: &SparseFactor, cap: usize) -> Result<f64> {
    let n = factor.n();
    if n > cap {
        return Err(Error::DenseTooLarge { n, cap });
    }
    if points.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: points.len(),
        });
    }
    let permuted = points.select(factor.perm());
    let theta = KernelCovariance::new(spec, &permuted).dense();
    Ok(-0.5 * (factor.logdet_precision() + logdet_spd(&theta)?))
}

/// `KL(factor) − KL(reference)` for two KL-optimal factors over the same
/// ordering; no dense matrix is formed.
pub fn kl_factor_relative(factor: &SparseFactor, reference: &SparseFactor) -> Result<f64> {
    if factor.perm() != reference.perm() {
        return Err(Error::InvalidParameter(
            "relative KL needs factors over the same ordering".into(),
        ));
    }
    Ok(0.5 * (reference.logdet_precision() - factor.logdet_precision()))
}

/// [`kl_factor`] for an explicit covariance indexed in original coordinates.
pub fn kl_factor_matrix<C: Covariance + ?Sized>(cov: &C, factor: &SparseFactor) -> Result<f64> {
    let perm = factor.perm();
    let theta = DMatrix::from_fn(perm.len(), perm.len(), |a, b| cov.entry(perm[a], perm[b]));
    Ok(-0.5 * (factor.logdet_precision() + logdet_spd(&theta)?))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Two-sided standard normal quantile for a central interval of `level`.
pub fn central_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Fraction of `truth` inside `mean ± z σ` (inclusive).
pub fn coverage(mean: &[f64], var: &[f64], truth: &[f64], level: f64) -> Result<f64> {
    if mean.len() != truth.len() || var.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: mean.len().min(var.len()),
        });
    }
    let z = central_z(level)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let hits = mean
        .iter()
        .zip(var)
        .zip(truth)
        .filter(|((m, v), t)| (*t - *m).abs() <= z * v.max(0.0).sqrt())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Intersection over union of the off-diagonal entries of two patterns
/// (1 when both have none).
pub fn iou(a: &SparsityPattern, b: &SparsityPattern) -> f64 {
    let sa: HashSet<(usize, usize)> = a.off_diagonal().collect();
    let sb: HashSet<(usize, usize)> = b.off_diagonal().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{factorize, FactorParams, Method};
    use crate::kernel::Smoothness;
    use crate::dense::inverse_spd;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.2
    }

    #[test]
    fn kl_scalar_and_identity() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let two = DMatrix::from_element(1, 1, 2.0);
        assert_relative_eq!(kl_dense(&one, &two).unwrap(), 0.5 * (0.5 + 2f64.ln() - 1.0), max_relative = 1e-14);
        assert_relative_eq!(kl_dense(&one, &two).unwrap(), 0.096574, epsilon = 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(5, &mut rng);
        assert!(kl_dense(&a, &a).unwrap().abs() < 1e-10);
        let b = random_spd(5, &mut rng);
        assert!((kl_dense(&a, &b).unwrap() - kl_dense(&b, &a).unwrap()).abs() > 1e-6);
    }

    #[test]
    fn kl_rejects_indefinite() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(kl_dense(&a, &b).is_err());
    }

    fn points(n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::new((0..2 * n).map(|_| rng.random()).collect(), 2).unwrap()
    }

    #[test]
    fn factor_kl_matches_dense_kl() {
        let spec = KernelSpec::matern(Smoothness::Half, 0.4);
        for (n, seed) in [(30, 1), (60, 2), (100, 3)] {
            let pts = points(n, seed);
            for method in [Method::RhoBall, Method::Knn, Method::Select, Method::SelectAgg] {
                let out = factorize(&spec, &pts, method, &FactorParams::default()).unwrap();
                let permuted = pts.select(out.factor.perm());
                let theta = KernelCovariance::new(&spec, &permuted).dense();
                let l = out.factor.to_dense();
                let approx = inverse_spd(&(&l * l.transpose())).unwrap();
                let want = kl_dense(&theta, &approx).unwrap();
                let got = kl_factor(&spec, &pts, &out.factor).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn full_pattern_has_zero_kl() {
        let spec = KernelSpec::matern(Smoothness::ThreeHalves, 0.3);
        let pts = points(40, 4);
        let params = FactorParams {
            rho: 1e9,
            ..FactorParams::default()
        };
        let out = factorize(&spec, &pts, Method::RhoBall, &params).unwrap();
        assert!(kl_factor(&spec, &pts, &out.factor).unwrap().abs() < 1e-6);
        let sparse = factorize(&spec, &pts, Method::RhoBall, &FactorParams::default()).unwrap();
        let rel = kl_factor_relative(&sparse.factor, &out.factor).unwrap();
        assert_relative_eq!(rel, kl_factor(&spec, &pts, &sparse.factor).unwrap(), max_relative = 1e-6, epsilon = 1e-9);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let spec = KernelSpec::matern(Smoothness::Half, 0.3);
        let pts = points(20, 5);
        let out = factorize(&spec, &pts, Method::Knn, &FactorParams::default()).unwrap();
        assert!(matches!(
            kl_factor_with_cap(&spec, &pts, &out.factor, 10),
            Err(Error::DenseTooLarge { .. })
        ));
    }

    #[test]
    fn rmse_and_coverage_trivia() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(coverage(&[1.0, 2.0], &[0.5, 0.5], &[1.0, 2.0], 0.9).unwrap(), 1.0);
        assert_relative_eq!(central_z(0.9).unwrap(), 1.6448536269514722, max_relative = 1e-12);
        assert_relative_eq!(central_z(0.95).unwrap(), 1.959963984540054, max_relative = 1e-12);
        assert!(coverage(&[0.0], &[1.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn coverage_of_standard_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = rand_distr::StandardNormal;
        let truth: Vec<f64> = (0..20000).map(|_| rng.sample::<f64, _>(normal)).collect();
        let c = coverage(&vec![0.0; 20000], &vec![1.0; 20000], &truth, 0.9).unwrap();
        assert!((c - 0.9).abs() < 0.01);
    }

    #[test]
    fn iou_cases() {
        let a = SparsityPattern::new(vec![vec![0, 1, 2], vec![1, 2], vec![2]]).unwrap();
        let b = SparsityPattern::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        let c = SparsityPattern::new(vec![vec![0, 1], vec![1], vec![2]]).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b, &b), 1.0);
        assert_relative_eq!(iou(&a, &c), 1.0 / 3.0);
        let d = SparsityPattern::new(vec![vec![0, 2], vec![1], vec![2]]).unwrap();
        assert_eq!(iou(&c, &d), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn kl_is_nonnegative(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(4, &mut rng);
            let b = random_spd(4, &mut rng);
            proptest::prop_assert!(kl_dense(&a, &b).unwrap() >= -1e-10);
        }

        #[test]
        fn kl_ignores_candidate_input_order(seed in 0u64..50) {
            let spec = KernelSpec::matern(Smoothness::ThreeHalves, 0.3);
            let pts = points(30, 200 + seed);
            let out = factorize(&spec, &pts, Method::Select, &FactorParams::default()).unwrap();
            let permuted = pts.select(out.factor.perm());
            let cov = KernelCovariance::new(&spec, &permuted);
            // rerun every column's selection with reversed candidate lists
            let mut cols = Vec::new();
            for i in 0..30 {
                let mut cand: Vec<usize> = (i + 1..30).filter(|j| {
                    crate::kernel::distance(permuted.point(*j), permuted.point(i)) <= 4.0 * out.ordering.length_scale(i)
                }).collect();
                let budget = out.pattern.column(i).len() - 1;
                let forward = crate::select::select_single(&cov, i, &cand, budget).unwrap();
                cand.reverse();
                let backward = crate::select::select_single(&cov, i, &cand, budget).unwrap();
                let mut a = forward.indices.clone();
                let mut b = backward.indices.clone();
                a.sort_unstable();
                b.sort_unstable();
                proptest::prop_assert_eq!(&a, &b);
                let mut col = vec![i];
                col.extend(b);
                cols.push(col);
            }
            let pattern = SparsityPattern::new(cols).unwrap();
            let f = crate::factor::compute_entries(&cov, &pattern, out.factor.perm().to_vec()).unwrap();
            let kl = kl_factor(&spec, &pts, &f).unwrap();
            proptest::prop_assert!((kl - kl_factor(&spec, &pts, &out.factor).unwrap()).abs() <= 1e-10 * kl.abs().max(1e-3));
        }
    }
}
