use approx::assert_relative_eq;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dense::{inverse_spd, logdet_spd};
use crate::kernel::{conditional_oracle, Smoothness};

fn random_points(n: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new((0..2 * n).map(|_| rng.random()).collect(), 2).unwrap()
}

fn spec() -> KernelSpec {
    KernelSpec::matern(Smoothness::ThreeHalves, 0.3)
}

/// `Θ` in ordering coordinates.
fn ordered_theta(spec: &KernelSpec, points: &PointSet, out: &FactorOutput) -> DMatrix<f64> {
    let permuted = out.ordering.permute(points);
    KernelCovariance::new(spec, &permuted).dense()
}

/// `KL(N(0, Θ) ‖ N(0, (L Lᵀ)⁻¹))` straight from the dense definition.
fn dense_kl(theta: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let n = theta.nrows() as f64;
    let prec = l * l.transpose();
    let approx_cov = inverse_spd(&prec).unwrap();
    let tr = (approx_cov.clone().try_inverse().unwrap() * theta).trace();
    0.5 * (tr + logdet_spd(&approx_cov).unwrap() - logdet_spd(theta).unwrap() - n)
}

#[test]
fn scalar_column() {
    let pts = random_points(3, 1);
    let s = spec().with_nugget(0.25);
    let cov = KernelCovariance::new(&s, &pts);
    let v = column_entries(&cov, &[1]).unwrap();
    assert_relative_eq!(v[0], 1.0 / 1.25f64.sqrt(), max_relative = 1e-15);
}

#[test]
fn full_pattern_inverts_theta() {
    let pts = random_points(25, 2);
    let s = spec();
    let params = FactorParams {
        rho: 1e6,
        ..FactorParams::default()
    };
    let out = factorize(&s, &pts, Method::RhoBall, &params).unwrap();
    assert_eq!(out.factor.nnz(), 25 * 26 / 2);
    let theta = ordered_theta(&s, &pts, &out);
    let l = out.factor.to_dense();
    let product = &l * l.transpose() * &theta;
    assert!((product - DMatrix::identity(25, 25)).amax() < 1e-6);

    // in original coordinates through the permutation
    let raw = KernelCovariance::new(&s, &pts).dense();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..25).map(|_| rng.random()).collect();
    let y: Vec<f64> = (raw.clone() * nalgebra::DVector::from_vec(x.clone())).iter().copied().collect();
    let back = out.factor.apply_precision(&y);
    for (a, b) in back.iter().zip(&x) {
        assert_relative_eq!(*a, *b, epsilon = 1e-6);
    }
}

#[test]
fn columns_are_normalized_for_every_method() {
    let pts = random_points(60, 4);
    let s = spec();
    for method in Method::ALL {
        let out = factorize(&s, &pts, method, &FactorParams::default()).unwrap();
        let theta = ordered_theta(&s, &pts, &out);
        let l = out.factor.to_dense();
        let d = l.transpose() * &theta * &l;
        for i in 0..60 {
            assert_relative_eq!(d[(i, i)], 1.0, epsilon = 1e-8);
        }
        let pattern = out.factor.pattern();
        for i in 0..60 {
            assert_eq!(pattern.column(i)[0], i);
        }
    }
}

#[test]
fn kl_matches_posterior_log_variance_sum() {
    let pts = random_points(40, 5);
    let s = spec();
    for method in [Method::RhoBall, Method::Select, Method::SelectAgg] {
        let out = factorize(&s, &pts, method, &FactorParams::default()).unwrap();
        let theta = ordered_theta(&s, &pts, &out);
        let mut terms = 0.0;
        for i in 0..40 {
            let col = out.pattern.column(i);
            let sparse = conditional_oracle(&theta, &[i], &[i], &[col[1..].to_vec()]).unwrap()[(0, 0)];
            let after: Vec<usize> = (i + 1..40).collect();
            let exact = conditional_oracle(&theta, &[i], &[i], &[after]).unwrap()[(0, 0)];
            terms += sparse.ln() - exact.ln();
        }
        let kl = dense_kl(&theta, &out.factor.to_dense());
        assert_relative_eq!(2.0 * kl, terms, max_relative = 1e-6);
    }
}

#[test]
fn aggregated_entries_match_per_column() {
    let pts = random_points(30, 6);
    let s = spec();
    let cov = KernelCovariance::new(&s, &pts);
    let shared = vec![2, 5, 6, 9, 11, 14, 17, 20, 22, 25, 27, 29];
    let group = vec![5, 9, 11, 20];
    let agg = aggregated_entries(&cov, &group, &shared).unwrap();
    for (&i, vals) in group.iter().zip(&agg) {
        let col: Vec<usize> = shared.iter().copied().filter(|&j| j >= i).collect();
        let direct = column_entries(&cov, &col).unwrap();
        assert_eq!(vals.len(), direct.len());
        for (a, b) in vals.iter().zip(&direct) {
            assert_relative_eq!(*a, *b, max_relative = 1e-10, epsilon = 1e-12);
        }
    }
    let single = aggregated_entries(&cov, &[14], &[14, 17, 20]).unwrap();
    let direct = column_entries(&cov, &[14, 17, 20]).unwrap();
    for (a, b) in single[0].iter().zip(&direct) {
        assert_relative_eq!(*a, *b, max_relative = 1e-12);
    }
}

#[test]
fn contiguous_group_contribution_is_a_log_determinant() {
    let pts = random_points(20, 7);
    let s = spec();
    let cov = KernelCovariance::new(&s, &pts);
    let theta = cov.dense();
    let group = vec![3, 4, 5];
    let shared = vec![3, 4, 5, 8, 12, 15, 19];
    let agg = aggregated_entries(&cov, &group, &shared).unwrap();
    let contribution: f64 = agg.iter().map(|v| -2.0 * v[0].ln()).sum();
    let cond = conditional_oracle(&theta, &group, &group, &[vec![8, 12, 15, 19]]).unwrap();
    assert_relative_eq!(contribution, logdet_spd(&cond).unwrap(), max_relative = 1e-10);
}

#[test]
fn supernodes_with_unit_lambda_are_singletons() {
    let ell: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
    let ordering = Ordering::from_parts((0..6).collect(), ell, 1).unwrap();
    let pattern: Vec<Vec<usize>> = (0..6).map(|i| (i..6).collect()).collect();
    let groups = aggregate_supernodes(&ordering, &pattern, 1.0);
    assert_eq!(groups, (0..6).map(|i| vec![i]).collect::<Vec<_>>());
}

#[test]
fn supernode_sweep_by_hand() {
    let ell = vec![1.0, 1.2, 1.4, 2.0, 2.1, 2.9, 3.5, f64::INFINITY];
    let ordering = Ordering::from_parts((0..8).collect(), ell, 1).unwrap();
    let pattern = vec![
        vec![0, 1, 2, 3],
        vec![1, 2, 4],
        vec![2, 3, 5],
        vec![3, 4, 5, 6],
        vec![4, 5, 7],
        vec![5, 6],
        vec![6, 7],
        vec![7],
    ];
    // i=0: ℓ ≤ 1.5 → {0,1,2}; i=3: ℓ ≤ 3 → {3,4,5}; i=6: ℓ ≤ 5.25 → {6}; i=7 → {7}
    let groups = aggregate_supernodes(&ordering, &pattern, 1.5);
    assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6], vec![7]]);
}

#[test]
fn supernodes_partition_columns() {
    let pts = random_points(80, 8);
    let ordering = reverse_maximin(&pts, 1, None).unwrap();
    let permuted = ordering.permute(&pts);
    let natural = Ordering::from_parts((0..80).collect(), ordering.length_scales().to_vec(), 1).unwrap();
    let pattern: Vec<Vec<usize>> = (0..80)
        .map(|i| with_diagonal(i, rho_ball_candidates(&natural, &permuted, i, 2.0)))
        .collect();
    let groups = aggregate_supernodes(&ordering, &pattern, 1.5);
    let mut all: Vec<usize> = groups.concat();
    all.sort_unstable();
    assert_eq!(all, (0..80).collect::<Vec<_>>());
}

#[test]
fn global_budget_extremes() {
    let pts = random_points(8, 9);
    let s = spec();
    let cov = KernelCovariance::new(&s, &pts);
    let cand: Vec<Vec<usize>> = (0..8).map(|i| (i + 1..8).collect()).collect();
    let diag = global_allocate(&cov, &cand, 8).unwrap();
    assert!(diag.columns().iter().enumerate().all(|(i, c)| c == &vec![i]));
    let full = global_allocate(&cov, &cand, 64).unwrap();
    assert!(full.columns().iter().enumerate().all(|(i, c)| c.len() == 8 - i));
    assert!(global_allocate(&cov, &cand, 7).is_err());
}

fn pattern_kl(cov: &KernelCovariance<'_>, pattern: &SparsityPattern) -> f64 {
    let f = compute_entries(cov, pattern, (0..pattern.len()).collect()).unwrap();
    dense_kl(&cov.dense(), &f.to_dense())
}

#[test]
fn global_allocation_beats_even_split() {
    for seed in 0..5 {
        let pts = random_points(12, 10 + seed);
        let s = spec();
        let ordering = reverse_maximin(&pts, 1, None).unwrap();
        let permuted = ordering.permute(&pts);
        let cov = KernelCovariance::new(&s, &permuted);
        let cand: Vec<Vec<usize>> = (0..12).map(|i| (i + 1..12).collect()).collect();
        let global = global_allocate(&cov, &cand, 20).unwrap();
        assert_eq!(global.nnz(), 20);
        // even split: 8 extra entries, one each for the first 8 columns,
        // chosen by the same per-column greedy rule
        let even: Vec<Vec<usize>> = (0..12)
            .map(|i| {
                let s = crate::select::select_single(&cov, i, &cand[i], usize::from(i < 8)).unwrap();
                with_diagonal(i, s.indices)
            })
            .collect();
        let even = SparsityPattern::new(even).unwrap();
        assert_eq!(even.nnz(), 20);
        assert!(pattern_kl(&cov, &global) <= pattern_kl(&cov, &even) + 1e-12);
    }
}

#[test]
fn group_global_allocation_respects_budget() {
    let pts = random_points(50, 11);
    let s = spec();
    let base = factorize(&s, &pts, Method::RhoBallAgg, &FactorParams::default()).unwrap();
    let out = factorize(&s, &pts, Method::SelectAggGlobal, &FactorParams::default()).unwrap();
    assert!(out.factor.nnz() <= base.factor.nnz());
    assert!(out.pattern.groups().is_some());
}

#[test]
fn selection_patterns_are_nested() {
    let pts = random_points(40, 12);
    let s = spec();
    let mut prev: Option<(SparsityPattern, f64)> = None;
    for k in 1..6 {
        let params = FactorParams {
            k: Some(k),
            ..FactorParams::default()
        };
        let out = factorize(&s, &pts, Method::Select, &params).unwrap();
        let theta = ordered_theta(&s, &pts, &out);
        let kl = dense_kl(&theta, &out.factor.to_dense());
        if let Some((p, prev_kl)) = &prev {
            for i in 0..40 {
                assert!(p.column(i).iter().all(|j| out.pattern.column(i).contains(j)));
            }
            assert!(kl <= prev_kl + 1e-12);
        }
        prev = Some((out.pattern, kl));
    }
}

#[test]
fn matched_budgets_across_methods() {
    let pts = random_points(64, 13);
    let s = spec();
    let params = FactorParams::default();
    let base = factorize(&s, &pts, Method::RhoBall, &params).unwrap();
    let knn = factorize(&s, &pts, Method::Knn, &params).unwrap();
    let sel = factorize(&s, &pts, Method::Select, &params).unwrap();
    let glob = factorize(&s, &pts, Method::SelectGlobal, &params).unwrap();
    assert_eq!(base.factor.nnz(), knn.factor.nnz());
    assert!(sel.factor.nnz() <= base.factor.nnz());
    assert!(glob.factor.nnz() <= base.factor.nnz());
}

#[test]
fn contiguous_candidates_follow_the_group() {
    let pts = random_points(60, 14);
    let out = factorize(&spec(), &pts, Method::SelectAggContiguous, &FactorParams::default()).unwrap();
    let pattern = &out.pattern;
    for g in pattern.groups().unwrap() {
        let first = *g.iter().min().unwrap();
        let last = *g.iter().max().unwrap();
        for &j in pattern.column(first) {
            assert!(g.contains(&j) || j > last);
        }
    }
}

#[test]
fn triplet_roundtrip() {
    let pts = random_points(30, 15);
    let out = factorize(&spec(), &pts, Method::Select, &FactorParams::default()).unwrap();
    let mut buf = Vec::new();
    out.factor.write_triplets(&mut buf).unwrap();
    let mut perm_buf = Vec::new();
    out.factor.write_permutation(&mut perm_buf).unwrap();
    let perm = SparseFactor::read_permutation(&perm_buf[..]).unwrap();
    let back = SparseFactor::read_triplets(&buf[..], perm).unwrap();
    assert_eq!(back, out.factor);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(&format!("30 {}\n", out.factor.nnz())));
    assert!(SparseFactor::read_triplets("3 1\n0 1 1.0\n".as_bytes(), vec![0, 1, 2]).is_err());
}

#[test]
fn triangular_solves_invert_products() {
    let pts = random_points(30, 16);
    let out = factorize(&spec(), &pts, Method::Knn, &FactorParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..30).map(|_| rng.random()).collect();
    let a = out.factor.solve_lower(&out.factor.mul(&x));
    let b = out.factor.solve_upper(&out.factor.mul_transpose(&x));
    for i in 0..30 {
        assert_relative_eq!(a[i], x[i], epsilon = 1e-10);
        assert_relative_eq!(b[i], x[i], epsilon = 1e-10);
    }
}

#[test]
fn method_names_roundtrip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("nope".parse::<Method>().is_err());
}

proptest::proptest! {
    #[test]
    fn aggregated_equals_per_column(seed in 0u64..100) {
        let pts = random_points(45, 100 + seed);
        let s = spec();
        let out = factorize(&s, &pts, Method::SelectAgg, &FactorParams::default()).unwrap();
        let permuted = out.ordering.permute(&pts);
        let cov = KernelCovariance::new(&s, &permuted);
        let plain = SparsityPattern::new(out.pattern.columns().to_vec()).unwrap();
        let direct = compute_entries(&cov, &plain, out.ordering.perm().to_vec()).unwrap();
        for i in 0..45 {
            let (_, a) = out.factor.column(i);
            let (_, b) = direct.column(i);
            for (x, y) in a.iter().zip(b) {
                proptest::prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
        }
    }
}
