//! Row-major feature matrices and the jittered Cholesky used by the GP code.

use faer::linalg::solvers::Llt;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Dense row-major matrix of features (one row per point).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// One column per input vector; all must have the same length.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::LengthMismatch {
                expected: rows,
                actual: bad.len(),
            });
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn prefix_rows(&self, n: usize) -> Matrix {
        let n = n.min(self.rows);
        Matrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    /// Rows `[lo, hi)`.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Matrix {
        Matrix {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }

    /// Column-wise concatenation; all parts must have the same row count.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::LengthMismatch {
                expected: rows,
                actual: bad.rows,
            });
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Row-wise concatenation; all parts must have the same column count.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        if let Some(bad) = parts.iter().find(|m| m.cols != cols) {
            return Err(Error::LengthMismatch {
                expected: cols,
                actual: bad.cols,
            });
        }
        let data: Vec<f64> = parts.iter().flat_map(|m| m.data.iter().copied()).collect();
        Ok(Matrix {
            rows: data.len().checked_div(cols).unwrap_or(0),
            cols,
            data,
        })
    }
}

/// Largest jitter tried by [`cholesky_jittered`].
pub const MAX_JITTER: f64 = 1e-6;

/// Cholesky factor of `k + jitter I`, starting from `initial_jitter` and
/// multiplying it by ten until the factorisation succeeds or the jitter
/// exceeds [`MAX_JITTER`]. Returns the factor and the jitter used.
pub fn cholesky_jittered(mut k: Mat<f64>, initial_jitter: f64) -> Result<(Llt<f64>, f64)> {
    let n = k.nrows();
    let min_diag = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut jitter = initial_jitter;
    let mut applied = 0.0;
    loop {
        for i in 0..n {
            k[(i, i)] += jitter - applied;
        }
        applied = jitter;
        if let Ok(llt) = k.llt(Side::Lower) {
            return Ok((llt, jitter));
        }
        let next = if jitter > 0.0 { jitter * 10.0 } else { 1e-12 };
        if next > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Cholesky {
                size: n,
                jitter,
                min_diag,
            });
        }
        jitter = next;
    }
}
