//! Dense row-major matrices and the handful of kernels the solvers need.
//!
//! The problem sizes here are desk-scale (a few hundred nodes per axis), so a
//! cache-friendly triple loop beats pulling in a BLAS. The multiply keeps the
//! column index innermost so the compiler can vectorize the row updates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::math;
use crate::Result;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major data vector; length must match.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SpectraError::InvalidInput(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Immutable view of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutable view of row `i`.
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Raw data slice (row-major).
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * v` into `out`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            out[i] = acc;
        }
    }

    /// `self^T * v` into `out` (used for left Perron vectors).
    pub fn matvec_transpose(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += vi * a;
            }
        }
    }

    /// `out = self * b`; `out` must be pre-sized. i-k-j loop order so the
    /// innermost update streams along contiguous rows.
    pub fn mul_into(&self, b: &Matrix, out: &mut Matrix) {
        debug_assert_eq!(self.cols, b.rows);
        debug_assert_eq!(out.rows, self.rows);
        debug_assert_eq!(out.cols, b.cols);
        out.data.fill(0.0);
        let n = b.cols;
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = &b.data[k * n..(k + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += aik * bv;
                }
            }
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    /// Multiply every entry by `s`.
    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    /// Per-row sums (the discrete analogue of `∫ k(x,y) dy`).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().sum())
            .collect()
    }

    /// Largest row sum of absolute values — the induced sup-norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| math::abs(*v)).sum())
            .fold(0.0, math::max)
    }

    /// Smallest entry.
    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, math::min)
    }

    /// Largest entry magnitude.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|v| math::abs(*v)).fold(0.0, math::max)
    }

    /// Replace negative entries with zero (projection onto the cone of
    /// entrywise-nonnegative matrices; callers bound the clamped mass first).
    pub fn clamp_negatives_to_zero(&mut self) {
        for a in self.data.iter_mut() {
            if *a < 0.0 {
                *a = 0.0;
            }
        }
    }

    /// Solve `self * x = rhs` by LU with partial pivoting. `self` is copied;
    /// fails on a pivot below `1e-300` (numerically singular system).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.rows != self.cols || rhs.len() != self.rows {
            return Err(SpectraError::Numerical(
                "linear solve requires a square system".into(),
            ));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x: Vec<f64> = rhs.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            // Pivot search.
            let mut best = col;
            let mut best_val = math::abs(a[perm[col] * n + col]);
            for r in (col + 1)..n {
                let v = math::abs(a[perm[r] * n + col]);
                if v > best_val {
                    best = r;
                    best_val = v;
                }
            }
            if best_val < 1e-300 {
                return Err(SpectraError::Numerical(format!(
                    "singular linear system (pivot {best_val:.3e} at column {col})"
                )));
            }
            perm.swap(col, best);
            let prow = perm[col];
            let pivot = a[prow * n + col];
            for r in (col + 1)..n {
                let row = perm[r];
                let factor = a[row * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[row * n + col] = 0.0;
                for c in (col + 1)..n {
                    a[row * n + c] -= factor * a[prow * n + c];
                }
                x[row] -= factor * x[prow];
            }
        }
        // Back substitution.
        let mut out = vec![0.0; n];
        for col in (0..n).rev() {
            let row = perm[col];
            let mut acc = x[row];
            for c in (col + 1)..n {
                acc -= a[row * n + c] * out[c];
            }
            out[col] = acc / a[row * n + col];
        }
        Ok(out)
    }
}

/// Sup norm of a vector.
pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| math::abs(*x)).fold(0.0, math::max)
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
