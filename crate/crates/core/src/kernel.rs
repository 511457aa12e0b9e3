//! Matérn kernels, point sets and covariance sources.
//!
//! Everything downstream (selection, factorization, drivers) reads covariance
//! entries through the [`Covariance`] trait, so the same selection code runs
//! on kernel matrices ([`KernelCovariance`]) and on explicit matrices
//! ([`MatrixCovariance`]).

use nalgebra::DMatrix;

use crate::dense::cholesky;
use crate::{Error, Result};

/// Half-integer Matérn smoothness with closed-form correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Smoothness::Half),
            1.5 => Ok(Smoothness::ThreeHalves),
            2.5 => Ok(Smoothness::FiveHalves),
            _ => Err(Error::InvalidParameter(format!(
                "smoothness must be one of 0.5, 1.5, 2.5 (got {nu})"
            ))),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    /// Matérn correlation at scaled distance `r = ‖x − y‖ / ℓ`.
    #[inline]
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Smoothness::Half => (-r).exp(),
            Smoothness::ThreeHalves => {
                let a = 3f64.sqrt() * r;
                (1.0 + a) * (-a).exp()
            }
            Smoothness::FiveHalves => {
                let a = 5f64.sqrt() * r;
                (1.0 + a + 5.0 * r * r / 3.0) * (-a).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub smoothness: Smoothness,
    pub length_scale: f64,
    pub variance: f64,
    pub nugget: f64,
}

impl KernelSpec {
    pub fn matern(smoothness: Smoothness, length_scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            smoothness,
            length_scale,
            variance: 1.0,
            nugget: 0.0,
        }
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale > 0.0
            && self.length_scale.is_finite()
            && self.variance > 0.0
            && self.variance.is_finite()
            && self.nugget >= 0.0
            && self.nugget.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel needs ℓ > 0, σ² > 0, nugget ≥ 0 (got {self:?})"
            )))
        }
    }

    /// Kernel value between two distinct stored points (no nugget).
    #[inline]
    pub fn cross(&self, x: &[f64], y: &[f64]) -> f64 {
        self.variance * self.smoothness.correlation(distance(x, y) / self.length_scale)
    }
}

/// Evaluates the kernel between two raw points. The nugget is added when the
/// coordinates coincide exactly.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let value = spec.cross(x, y);
    Ok(if x == y { value + spec.nugget } else { value })
}

#[inline]
pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `N` points in `D` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates cannot be split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(PointSet { coords, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        PointSet::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Points `indices[0], indices[1], …` as a new set.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            coords,
            dim: self.dim,
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet {
            coords,
            dim: self.dim,
        })
    }

    /// Removes exactly repeated rows, keeping first occurrences in order.
    /// Returns the deduplicated set and the number of rows removed.
    pub fn dedup(&self) -> (PointSet, usize) {
        let mut seen = std::collections::HashSet::new();
        let mut keep = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let key: Vec<u64> = self.point(i).iter().map(|c| canonical_bits(*c)).collect();
            if seen.insert(key) {
                keep.push(i);
            }
        }
        let removed = self.len() - keep.len();
        (self.select(&keep), removed)
    }

    pub fn check_distinct(&self) -> Result<()> {
        let (_, removed) = self.dedup();
        if removed == 0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "point set contains {removed} duplicate rows"
            )))
        }
    }
}

fn canonical_bits(c: f64) -> u64 {
    // -0.0 and 0.0 compare equal as coordinates
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}

/// Read access to a symmetric positive-definite covariance matrix over a
/// fixed index space `0..len()`.
pub trait Covariance: Sync {
    fn len(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn diag(&self, i: usize) -> f64 {
        self.entry(i, i)
    }

    /// `out[r] = Θ[rows[r], k]`.
    fn column(&self, rows: &[usize], k: usize, out: &mut [f64]) {
        for (o, &r) in out.iter_mut().zip(rows) {
            *o = self.entry(r, k);
        }
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    fn dense(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.block(&all, &all)
    }
}

/// Kernel matrix over a point set. The nugget is applied only on the
/// diagonal (same stored index), never between distinct coincident points.
#[derive(Debug, Clone, Copy)]
pub struct KernelCovariance<'a> {
    spec: &'a KernelSpec,
    points: &'a PointSet,
}

impl<'a> KernelCovariance<'a> {
    pub fn new(spec: &'a KernelSpec, points: &'a PointSet) -> Self {
        KernelCovariance { spec, points }
    }

    pub fn spec(&self) -> &KernelSpec {
        self.spec
    }

    pub fn points(&self) -> &PointSet {
        self.points
    }
}

impl Covariance for KernelCovariance<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.spec.variance + self.spec.nugget
        } else {
            self.spec.cross(self.points.point(i), self.points.point(j))
        }
    }

    fn column(&self, rows: &[usize], k: usize, out: &mut [f64]) {
        let xk = self.points.point(k);
        let inv_ell = 1.0 / self.spec.length_scale;
        for (o, &r) in out.iter_mut().zip(rows) {
            *o = if r == k {
                self.spec.variance + self.spec.nugget
            } else {
                let d = distance(self.points.point(r), xk);
                self.spec.variance * self.spec.smoothness.correlation(d * inv_ell)
            };
        }
    }
}

/// An explicit dense covariance matrix.
#[derive(Debug, Clone)]
pub struct MatrixCovariance {
    matrix: DMatrix<f64>,
}

impl MatrixCovariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(MatrixCovariance { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Covariance for MatrixCovariance {
    fn len(&self) -> usize {
        self.matrix.nrows()
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    fn column(&self, rows: &[usize], k: usize, out: &mut [f64]) {
        let col = self.matrix.column(k);
        for (o, &r) in out.iter_mut().zip(rows) {
            *o = col[r];
        }
    }
}

/// Kernel matrix between `rows` and `cols`, both indexing into `points`.
pub fn assemble_covariance(
    spec: &KernelSpec,
    points: &PointSet,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<f64> {
    KernelCovariance::new(spec, points).block(rows, cols)
}

/// `Θ_{I,J | V₁,…,Vₙ}` by conditioning on one set after another with dense
/// Schur complements.
///
/// This is the brute-force reference used by the tests of every selection
/// objective; it never touches the incremental factors.
pub fn conditional_oracle(
    theta: &DMatrix<f64>,
    rows: &[usize],
    cols: &[usize],
    conditioning: &[Vec<usize>],
) -> Result<DMatrix<f64>> {
    let mut universe: Vec<usize> = Vec::new();
    for &i in rows.iter().chain(cols).chain(conditioning.iter().flatten()) {
        if !universe.contains(&i) {
            universe.push(i);
        }
    }
    let local = |i: usize| universe.iter().position(|&u| u == i).unwrap();
    let mut current =
        DMatrix::from_fn(universe.len(), universe.len(), |a, b| theta[(universe[a], universe[b])]);

    for set in conditioning.iter().filter(|s| !s.is_empty()) {
        let v: Vec<usize> = set.iter().map(|&i| local(i)).collect();
        let all: Vec<usize> = (0..universe.len()).collect();
        let cvv = sub(&current, &v, &v);
        let cav = sub(&current, &all, &v);
        let chol = cholesky(&cvv, "conditioning block")?;
        let correction = &cav * chol.solve(&cav.transpose());
        current -= correction;
    }

    let r: Vec<usize> = rows.iter().map(|&i| local(i)).collect();
    let c: Vec<usize> = cols.iter().map(|&i| local(i)).collect();
    Ok(sub(&current, &r, &c))
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(s: Smoothness) -> KernelSpec {
        KernelSpec::matern(s, 1.0)
    }

    #[test]
    fn closed_forms() {
        let half = spec(Smoothness::Half);
        assert_eq!(kernel_eval(&half, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(
            kernel_eval(&half, &[0.0], &[1.0]).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            kernel_eval(&half, &[0.0], &[1.0]).unwrap(),
            0.367879,
            epsilon = 1e-6
        );
        let v = kernel_eval(&spec(Smoothness::ThreeHalves), &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.483358, epsilon = 1e-6);
        let s5 = 5f64.sqrt();
        let v = kernel_eval(&spec(Smoothness::FiveHalves), &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, (1.0 + s5 + 5.0 / 3.0) * (-s5).exp(), max_relative = 1e-15);
    }

    #[test]
    fn nugget_and_variance_on_diagonal() {
        let k = spec(Smoothness::ThreeHalves).with_variance(2.0).with_nugget(0.5);
        assert_eq!(kernel_eval(&k, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 2.5);
        let pts = PointSet::new(vec![0.0, 0.0], 1).unwrap();
        let m = assemble_covariance(&k, &pts, &[0], &[0]);
        assert_eq!(m[(0, 0)], 2.5);
        // coincident but distinct stored points: no nugget across them
        let m = assemble_covariance(&k, &pts, &[0, 1], &[0, 1]);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 1)], 2.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            kernel_eval(&spec(Smoothness::Half), &[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(KernelSpec::matern(Smoothness::Half, 0.0).validate().is_err());
        assert!(spec(Smoothness::Half).with_nugget(-1.0).validate().is_err());
        assert!(Smoothness::from_nu(1.0).is_err());
        assert_eq!(Smoothness::from_nu(2.5).unwrap(), Smoothness::FiveHalves);
    }

    #[test]
    fn exponential_kernel_is_markov_on_a_line() {
        let pts = PointSet::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        let m = assemble_covariance(&spec(Smoothness::Half), &pts, &[0, 1, 2], &[0, 1, 2]);
        assert_relative_eq!(m[(0, 2)], (-2.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(m[(0, 2)], m[(0, 1)] * m[(1, 2)], max_relative = 1e-14);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn oracle_small_cases() {
        let rho = 0.6;
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let c = conditional_oracle(&theta, &[0], &[0], &[vec![1]]).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.0 - rho * rho, max_relative = 1e-14);
        let c = conditional_oracle(&theta, &[0, 1], &[1], &[]).unwrap();
        assert_eq!(c[(0, 0)], rho);
        assert_eq!(c[(1, 0)], 1.0);
    }

    #[test]
    fn oracle_singular_conditioning_errors() {
        let theta = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0]);
        assert!(conditional_oracle(&theta, &[0], &[0], &[vec![1, 2]]).is_err());
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn nested_conditioning_matches_one_shot() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let theta = random_spd(6, &mut rng);
            let nested = conditional_oracle(&theta, &[0, 1], &[0, 1, 2], &[vec![3], vec![4]]).unwrap();
            let direct = conditional_oracle(&theta, &[0, 1], &[0, 1, 2], &[vec![3, 4]]).unwrap();
            // One-shot Schur complement written out by hand.
            let a = DMatrix::from_fn(2, 3, |i, j| theta[(i, j)]);
            let b = DMatrix::from_fn(2, 2, |i, j| theta[(i, 3 + j)]);
            let c = DMatrix::from_fn(2, 2, |i, j| theta[(3 + i, 3 + j)]);
            let d = DMatrix::from_fn(2, 3, |i, j| theta[(3 + i, j)]);
            let manual = a - b * c.try_inverse().unwrap() * d;
            for (x, y) in nested.iter().zip(manual.iter()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-10, epsilon = 1e-12);
            }
            for (x, y) in nested.iter().zip(direct.iter()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn covariance_is_positive_definite_with_small_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = 8 + trial * 2;
            let coords: Vec<f64> = (0..2 * n).map(|_| rng.random()).collect();
            let pts = PointSet::new(coords, 2).unwrap();
            for s in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
                let k = KernelSpec::matern(s, 0.5).with_nugget(1e-8);
                let m = KernelCovariance::new(&k, &pts).dense();
                assert!(cholesky(&m, "test").is_ok());
            }
        }
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let pts = PointSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![1.0, 2.0]]).unwrap();
        let (d, removed) = pts.dedup();
        assert_eq!(removed, 1);
        assert_eq!(d.len(), 2);
        assert_eq!(d.point(1), &[3.0, 4.0]);
        assert!(pts.check_distinct().is_err());
    }

    #[test]
    fn kernel_column_matches_entries() {
        let pts = PointSet::new(vec![0.0, 0.3, 0.9, 1.7], 1).unwrap();
        let k = spec(Smoothness::FiveHalves).with_nugget(0.1);
        let cov = KernelCovariance::new(&k, &pts);
        let rows = [3, 0, 2, 1];
        let mut out = [0.0; 4];
        cov.column(&rows, 2, &mut out);
        for (o, &r) in out.iter().zip(&rows) {
            assert_eq!(*o, cov.entry(r, 2));
        }
    }

    proptest::proptest! {
        #[test]
        fn kernel_is_symmetric(x in proptest::collection::vec(-5.0f64..5.0, 3),
                               y in proptest::collection::vec(-5.0f64..5.0, 3),
                               ell in 0.1f64..4.0) {
            for s in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
                let k = KernelSpec::matern(s, ell);
                proptest::prop_assert_eq!(kernel_eval(&k, &x, &y).unwrap(), kernel_eval(&k, &y, &x).unwrap());
            }
        }

        #[test]
        fn quotient_rule_partition_invariance(seed in 0u64..500, split in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = random_spd(7, &mut rng);
            let v: Vec<usize> = vec![2, 3, 4, 5, 6];
            let parts = vec![v[..split].to_vec(), v[split..].to_vec()];
            let a = conditional_oracle(&theta, &[0, 1], &[0, 1], &parts).unwrap();
            let b = conditional_oracle(&theta, &[0, 1], &[0, 1], std::slice::from_ref(&v)).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                proptest::prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1e-3));
            }
        }
    }
}
