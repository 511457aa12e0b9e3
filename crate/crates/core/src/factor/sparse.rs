use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Per-column row sets of a lower-triangular factor, in ordering positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    columns: Vec<Vec<usize>>,
    groups: Option<Vec<Vec<usize>>>,
}

impl SparsityPattern {
    /// Each column must start with its own index followed by strictly
    /// increasing later positions.
    pub fn new(columns: Vec<Vec<usize>>) -> Result<Self> {
        let n = columns.len();
        for (i, col) in columns.iter().enumerate() {
            let ok = col.first() == Some(&i)
                && col.windows(2).all(|w| w[0] < w[1])
                && col.last().is_some_and(|&l| l < n);
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "column {i} is not sorted, lower triangular and led by its diagonal"
                )));
            }
        }
        Ok(SparsityPattern {
            columns,
            groups: None,
        })
    }

    /// Builds an aggregated pattern: each group shares the row set `s̃`, and a
    /// member column `i` keeps the rows of `s̃` at or after `i`.
    pub fn aggregated(n: usize, groups: Vec<Vec<usize>>, shared: &[Vec<usize>]) -> Result<Self> {
        let mut columns = vec![Vec::new(); n];
        for (group, rows) in groups.iter().zip(shared) {
            for &i in group {
                if i >= n || !columns[i].is_empty() {
                    return Err(Error::InvalidParameter("groups must partition the columns".into()));
                }
                columns[i] = rows.iter().copied().filter(|&j| j >= i).collect();
            }
        }
        let mut pattern = SparsityPattern::new(columns)?;
        pattern.groups = Some(groups);
        Ok(pattern)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, i: usize) -> &[usize] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        self.groups.as_deref()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Off-diagonal `(row, col)` entries.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(i, col)| col[1..].iter().map(move |&j| (j, i)))
    }
}

/// Column-compressed lower-triangular factor `L` with `L Lᵀ ≈ Θ⁻¹` in
/// ordering coordinates. `perm[pos]` is the original index of position `pos`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFactor {
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
    perm: Vec<usize>,
}

impl SparseFactor {
    pub fn from_columns(
        pattern: &SparsityPattern,
        values: Vec<Vec<f64>>,
        perm: Vec<usize>,
    ) -> Result<Self> {
        let n = pattern.len();
        if values.len() != n || perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len().min(perm.len()),
            });
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut rows = Vec::with_capacity(pattern.nnz());
        let mut vals = Vec::with_capacity(pattern.nnz());
        for (i, v) in values.into_iter().enumerate() {
            let col = pattern.column(i);
            if v.len() != col.len() {
                return Err(Error::DimensionMismatch {
                    expected: col.len(),
                    got: v.len(),
                });
            }
            if !(v[0] > 0.0) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("factor column values"));
            }
            rows.extend_from_slice(col);
            vals.extend(v);
            col_ptr.push(rows.len());
        }
        Ok(SparseFactor {
            col_ptr,
            rows,
            values: vals,
            perm,
        })
    }

    pub fn n(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn column(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[i]..self.col_ptr[i + 1];
        (&self.rows[r.clone()], &self.values[r])
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.values[self.col_ptr[i]]
    }

    pub fn pattern(&self) -> SparsityPattern {
        let columns = (0..self.n()).map(|i| self.column(i).0.to_vec()).collect();
        SparsityPattern {
            columns,
            groups: None,
        }
    }

    /// `log det (L Lᵀ)`.
    pub fn logdet_precision(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.diagonal(i).ln()).sum::<f64>()
    }

    /// `L x` in ordering coordinates.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (i, &xi) in x.iter().enumerate() {
            let (rows, vals) = self.column(i);
            for (&r, &v) in rows.iter().zip(vals) {
                y[r] += v * xi;
            }
        }
        y
    }

    /// `Lᵀ x` in ordering coordinates.
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let (rows, vals) = self.column(i);
                rows.iter().zip(vals).map(|(&r, &v)| v * x[r]).sum()
            })
            .collect()
    }

    /// Solves `L x = b` in ordering coordinates.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in 0..self.n() {
            let (rows, vals) = self.column(i);
            x[i] /= vals[0];
            let xi = x[i];
            for (&r, &v) in rows[1..].iter().zip(&vals[1..]) {
                x[r] -= v * xi;
            }
        }
        x
    }

    /// Solves `Lᵀ x = b` in ordering coordinates.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..self.n()).rev() {
            let (rows, vals) = self.column(i);
            let s: f64 = rows[1..].iter().zip(&vals[1..]).map(|(&r, &v)| v * x[r]).sum();
            x[i] = (x[i] - s) / vals[0];
        }
        x
    }

    /// `P L Lᵀ Pᵀ x` for `x` in original coordinates: the approximate
    /// precision applied to a vector.
    pub fn apply_precision(&self, x: &[f64]) -> Vec<f64> {
        let xp: Vec<f64> = self.perm.iter().map(|&raw| x[raw]).collect();
        let yp = self.mul(&self.mul_transpose(&xp));
        let mut y = vec![0.0; x.len()];
        for (pos, &raw) in self.perm.iter().enumerate() {
            y[raw] = yp[pos];
        }
        y
    }

    /// Dense `L` in ordering coordinates.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let (rows, vals) = self.column(i);
            for (&r, &v) in rows.iter().zip(vals) {
                m[(r, i)] = v;
            }
        }
        m
    }

    /// Writes `N nnz` then one `row col value` line per entry (0-based,
    /// ordering coordinates).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.n(), self.nnz())?;
        for i in 0..self.n() {
            let (rows, vals) = self.column(i);
            for (&r, &v) in rows.iter().zip(vals) {
                writeln!(w, "{r} {i} {v:.16e}")?;
            }
        }
        Ok(())
    }

    pub fn write_permutation<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.perm {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    /// Reads the triplet format written by [`SparseFactor::write_triplets`].
    pub fn read_triplets<R: BufRead>(r: R, perm: Vec<usize>) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let mut it = header.split_whitespace();
        let n: usize = parse_field(it.next(), 1)?;
        let nnz: usize = parse_field(it.next(), 1)?;
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut count = 0;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut it = line.split_whitespace();
            let row: usize = parse_field(it.next(), lineno)?;
            let col: usize = parse_field(it.next(), lineno)?;
            let val: f64 = parse_field(it.next(), lineno)?;
            if row >= n || col > row {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("entry ({row}, {col}) outside the lower triangle"),
                });
            }
            columns[col].push((row, val));
            count += 1;
        }
        if count != nnz {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header announces {nnz} entries, found {count}"),
            });
        }
        let mut pattern = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for mut col in columns {
            col.sort_by_key(|e| e.0);
            pattern.push(col.iter().map(|e| e.0).collect());
            values.push(col.iter().map(|e| e.1).collect());
        }
        SparseFactor::from_columns(&SparsityPattern::new(pattern)?, values, perm)
    }

    pub fn read_permutation<R: BufRead>(r: R) -> Result<Vec<usize>> {
        let mut perm = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                perm.push(parse_field(Some(line.trim()), idx + 1)?);
            }
        }
        Ok(perm)
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: "expected a number".into(),
        })
}
