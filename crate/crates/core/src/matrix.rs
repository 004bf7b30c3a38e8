//! Dense row-major design matrix and the small amount of linear algebra the
//! estimators need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n x p` design matrix stored row-major.
///
/// `n` may be zero (an empty sample); `p` is always at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_row_major(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid(
                "design matrix must have at least one column",
            ));
        }
        if data.len() != n * p {
            return Err(Error::invalid(format!(
                "design data has {} entries, expected {n}x{p}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite design entry at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("ragged rows in design matrix"));
        }
        Self::from_row_major(rows.len(), p, rows.concat())
    }

    pub fn zeros(n: usize, p: usize) -> Result<Self> {
        Self::from_row_major(n, p, vec![0.0; n * p])
    }

    pub fn identity(p: usize) -> Result<Self> {
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            data[i * p + i] = 1.0;
        }
        Self::from_row_major(p, p, data)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            n: idx.len(),
            p: self.p,
            data,
        }
    }

    /// `X b`
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.p);
        self.rows().map(|r| dot(r, beta)).collect()
    }

    /// `X^T v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.p];
        for (r, &vi) in self.rows().zip(v) {
            if vi != 0.0 {
                axpy(vi, r, &mut out);
            }
        }
        out
    }

    /// `X^T X` as a dense row-major `p x p` matrix.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for r in self.rows() {
            for a in 0..p {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                let ga = &mut g[a * p..(a + 1) * p];
                for b in a..p {
                    ga[b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[a * p + b] = g[b * p + a];
            }
        }
        g
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> DesignMatrix {
        DesignMatrix {
            n: self.n,
            p: self.p,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

#[inline]
pub(crate) fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}
