use crate::kernel::Covariance;
use crate::{Error, Result};

/// Dense partial Cholesky columns over a fixed list of global rows.
///
/// Column `c` holds `Θ_{:,k | owners of columns < c} / √Θ_{k,k | …}` for its
/// owner `k`, stored contiguously (column-major).
#[derive(Debug, Clone)]
pub struct CholeskyColumns {
    rows: Vec<usize>,
    data: Vec<f64>,
    ncols: usize,
}

impl CholeskyColumns {
    pub fn new(rows: Vec<usize>) -> Self {
        CholeskyColumns {
            rows,
            data: Vec::new(),
            ncols: 0,
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn column(&self, c: usize) -> &[f64] {
        let n = self.rows.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, row: usize, c: usize) -> f64 {
        self.data[c * self.rows.len() + row]
    }

    /// `Θ_{:,k | owners of columns < upto}` for local row `k`, by left-looking.
    pub fn conditional_column<C: Covariance + ?Sized>(
        &self,
        cov: &C,
        k: usize,
        upto: usize,
        out: &mut [f64],
    ) {
        cov.column(&self.rows, self.rows[k], out);
        for c in 0..upto {
            let col = self.column(c);
            let lk = col[k];
            if lk != 0.0 {
                for (o, l) in out.iter_mut().zip(col) {
                    *o -= l * lk;
                }
            }
        }
    }

    /// Appends the column of local row `k`, returning it.
    pub fn append<C: Covariance + ?Sized>(&mut self, cov: &C, k: usize) -> Result<&[f64]> {
        let n = self.rows.len();
        let mut u = vec![0.0; n];
        self.conditional_column(cov, k, self.ncols, &mut u);
        normalize(&mut u, k)?;
        self.data.extend_from_slice(&u);
        self.ncols += 1;
        Ok(self.column(self.ncols - 1))
    }

    /// Inserts the column of local row `k` at column position `p`, then
    /// downdates the later columns so they are additionally conditioned on
    /// `k`. `owner_rows[c]` is the local row owning column `c`.
    pub fn insert_downdate<C: Covariance + ?Sized>(
        &mut self,
        cov: &C,
        k: usize,
        p: usize,
        owner_rows: &[usize],
    ) -> Result<()> {
        let n = self.rows.len();
        let mut u = vec![0.0; n];
        self.conditional_column(cov, k, p, &mut u);
        normalize(&mut u, k)?;

        let mut v = u.clone();
        for c in p..self.ncols {
            let r = owner_rows[c];
            let col = &mut self.data[c * n..(c + 1) * n];
            let l = col[r];
            let vr = v[r];
            let g2 = (l - vr) * (l + vr);
            if !(g2 > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "downdate of column {c} lost its pivot"
                )));
            }
            let gamma = g2.sqrt();
            let alpha = l / gamma;
            let beta = vr / gamma;
            for (lc, vc) in col.iter_mut().zip(v.iter_mut()) {
                *lc = alpha * *lc - beta * *vc;
                *vc = *vc / alpha - (beta / alpha) * *lc;
            }
        }

        let at = p * n;
        self.data.splice(at..at, u);
        self.ncols += 1;
        Ok(())
    }
}

fn normalize(u: &mut [f64], k: usize) -> Result<()> {
    let pivot = u[k];
    if !(pivot > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "nonpositive pivot {pivot:e} while appending a Cholesky column"
        )));
    }
    let inv = 1.0 / pivot.sqrt();
    u.iter_mut().for_each(|x| *x *= inv);
    Ok(())
}
