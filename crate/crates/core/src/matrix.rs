//! Dense row-major matrices and the handful of kernels the networks need.
//!
//! Column `c` of a matrix holds sample `c` of a batch; all elementwise and
//! affine kernels process each column with the same operation order, so a
//! sample's result is bit-identical regardless of which batch it sits in.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius / flattened-vector squared norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    /// Max absolute entry difference against another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `y = W x + b` with `W: out x in`, `x: in x batch`, `b` broadcast per row.
///
/// The accumulation order over the input index is fixed (ascending), so a
/// given column's output does not depend on the rest of the batch.
pub fn affine_forward(w: &Matrix, b: &[f64], x: &Matrix) -> Matrix {
    let (out_dim, in_dim) = (w.rows, w.cols);
    debug_assert_eq!(x.rows, in_dim);
    debug_assert_eq!(b.len(), out_dim);
    let batch = x.cols;
    let mut y = Matrix::zeros(out_dim, batch);
    for i in 0..out_dim {
        let yi = y.row_mut(i);
        yi.fill(b[i]);
        let wrow = w.row(i);
        for j in 0..in_dim {
            let wij = wrow[j];
            let xj = x.row(j);
            for c in 0..batch {
                yi[c] += wij * xj[c];
            }
        }
    }
    y
}

/// Backward of [`affine_forward`]: `dx = W^T dy`.
pub fn affine_backward_input(w: &Matrix, dy: &Matrix) -> Matrix {
    let (out_dim, in_dim) = (w.rows, w.cols);
    debug_assert_eq!(dy.rows, out_dim);
    let batch = dy.cols;
    let mut dx = Matrix::zeros(in_dim, batch);
    for i in 0..out_dim {
        let wrow = w.row(i);
        let dyi = dy.row(i);
        for j in 0..in_dim {
            let wij = wrow[j];
            let dxj = dx.row_mut(j);
            for c in 0..batch {
                dxj[c] += wij * dyi[c];
            }
        }
    }
    dx
}

/// Backward of [`affine_forward`] into the parameters:
/// `dW += dy x^T`, `db += rowsum(dy)`.
pub fn affine_backward_params(dy: &Matrix, x: &Matrix, dw: &mut Matrix, db: &mut [f64]) {
    let (out_dim, in_dim) = (dy.rows, x.rows);
    debug_assert_eq!(dw.rows, out_dim);
    debug_assert_eq!(dw.cols, in_dim);
    debug_assert_eq!(db.len(), out_dim);
    let batch = dy.cols;
    for i in 0..out_dim {
        let dyi = dy.row(i);
        let dwrow = dw.row_mut(i);
        for j in 0..in_dim {
            let xj = x.row(j);
            let mut acc = 0.0;
            for c in 0..batch {
                acc += dyi[c] * xj[c];
            }
            dwrow[j] += acc;
        }
        let mut bacc = 0.0;
        for c in 0..batch {
            bacc += dyi[c];
        }
        db[i] += bacc;
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for v in &mut y.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn tanh(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for v in &mut y.data {
        *v = libm::tanh(*v);
    }
    y
}
