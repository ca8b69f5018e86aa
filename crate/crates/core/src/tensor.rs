/*
Copyright 2026 The proxmetric Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! Dense row-major matrices and an LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "tensor",
                format!("{} values for a {}x{} tensor", data.len(), rows, cols),
            ));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Column vector.
    pub fn column(values: Vec<f64>) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("from_rows", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Tensor::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(m, n, out)?.ensure_finite("matmul")
    }

    /// `self * v` for a plain vector.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::shape(
                "mul_vec",
                format!("{:?} x {}", self.shape(), v.len()),
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ * v` for a plain vector.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(Error::shape(
                "tr_mul_vec",
                format!("{:?}ᵀ x {}", self.shape(), v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max absolute deviation from symmetry; `None` when not square.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        Some(worst)
    }
}

/// LU factorization `P K = L U` with partial (row) pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    // Unit-lower L below the diagonal, U on and above it.
    factors: Vec<f64>,
    // perm[i] = original row placed at position i.
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(k: &Tensor) -> Result<Lu> {
        let n = k.rows();
        if k.cols() != n {
            return Err(Error::shape("lu", format!("non-square {:?}", k.shape())));
        }
        let mut a = k.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot_row = col;
            let mut best = a[col * n + col].abs();
            for row in (col + 1)..n {
                let v = a[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot_row = row;
                }
            }
            if !(best >= PIVOT_TOLERANCE) {
                return Err(Error::Singular {
                    column: col,
                    pivot: best,
                });
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            let (upper, lower) = a.split_at_mut((col + 1) * n);
            let pivot_slice = &upper[col * n + col + 1..col * n + n];
            for row in 0..(n - col - 1) {
                let r = &mut lower[row * n..(row + 1) * n];
                let factor = r[col] / pivot;
                r[col] = factor;
                if factor != 0.0 {
                    for (x, p) in r[col + 1..].iter_mut().zip(pivot_slice) {
                        *x -= factor * p;
                    }
                }
            }
        }
        Ok(Lu {
            n,
            factors: a,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `K w = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut w: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.factors[i * n..i * n + i];
            let s: f64 = row.iter().zip(&w[..i]).map(|(l, x)| l * x).sum();
            w[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.factors[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&w[i + 1..]).map(|(u, x)| u * x).sum();
            w[i] = (w[i] - s) / self.factors[i * n + i];
        }
        w
    }

    /// Solves `Kᵀ s = g`.
    pub fn solve_transpose(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(g.len(), n);
        // Kᵀ = Uᵀ Lᵀ P, so solve Uᵀ y = g, Lᵀ t = y, s = Pᵀ t.
        let mut y = g.to_vec();
        for i in 0..n {
            let yi = y[i] / self.factors[i * n + i];
            y[i] = yi;
            if yi != 0.0 {
                for j in (i + 1)..n {
                    y[j] -= self.factors[i * n + j] * yi;
                }
            }
        }
        for i in (0..n).rev() {
            let yi = y[i];
            if yi != 0.0 {
                for j in 0..i {
                    y[j] -= self.factors[i * n + j] * yi;
                }
            }
        }
        let mut s = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            s[p] = y[i];
        }
        s
    }

    /// Column-by-column solve for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &Tensor) -> Result<Tensor> {
        if b.rows() != self.n {
            return Err(Error::shape(
                "linear_solve",
                format!("rhs {:?} for {}x{} system", b.shape(), self.n, self.n),
            ));
        }
        let cols = b.cols();
        let mut out = Tensor::zeros(self.n, cols);
        let mut col = vec![0.0; self.n];
        for j in 0..cols {
            for i in 0..self.n {
                col[i] = b.get(i, j);
            }
            let w = self.solve(&col);
            for i in 0..self.n {
                out.set(i, j, w[i]);
            }
        }
        out.ensure_finite("linear_solve")
    }

    pub fn solve_transpose_matrix(&self, g: &Tensor) -> Tensor {
        let cols = g.cols();
        let mut out = Tensor::zeros(self.n, cols);
        let mut col = vec![0.0; self.n];
        for j in 0..cols {
            for i in 0..self.n {
                col[i] = g.get(i, j);
            }
            let s = self.solve_transpose(&col);
            for i in 0..self.n {
                out.set(i, j, s[i]);
            }
        }
        out
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
