//! Row-major dense matrices of `f64`.
//!
//! Products parallelize over output rows only. Each output row is accumulated
//! in a fixed order, so results are bit-identical for any thread count.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Work (in multiply-adds) below which products stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (values.len(), 1),
            });
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            values.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            values,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            values: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, "elementwise")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; `f64::INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Index of the largest entry in row `i`, ties toward the lowest index.
    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        best
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (k, m) = (self.cols, rhs.cols);
        let mut out = Self::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a = &self.values[i * k..(i + 1) * k];
            for (p, &a_ip) in a.iter().enumerate() {
                if a_ip == 0.0 {
                    continue;
                }
                let b = &rhs.values[p * m..(p + 1) * m];
                for (o, &b_pj) in out_row.iter_mut().zip(b) {
                    *o += a_ip * b_pj;
                }
            }
        };
        if self.rows * k * m >= PAR_THRESHOLD {
            out.values.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.values.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn matmul_tn(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (k, m) = (self.cols, rhs.cols);
        let mut out = Self::zeros(k, m);
        for i in 0..self.rows {
            let a = self.row(i);
            let b = rhs.row(i);
            for (p, &a_ip) in a.iter().enumerate() {
                if a_ip == 0.0 {
                    continue;
                }
                let o = &mut out.values[p * m..(p + 1) * m];
                for (o, &b_ij) in o.iter_mut().zip(b) {
                    *o += a_ip * b_ij;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (k, m) = (self.cols, rhs.rows);
        let mut out = Self::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a = &self.values[i * k..(i + 1) * k];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b = &rhs.values[j * k..(j + 1) * k];
                *o = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        };
        if self.rows * k * m >= PAR_THRESHOLD {
            out.values.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.values.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.values[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.values[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a[(i, p)] * b[(p, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn ramp(rows: usize, cols: usize, offset: f64) -> DenseMatrix {
        let v = (0..rows * cols)
            .map(|k| ((k as f64) * 0.37 + offset).sin())
            .collect();
        DenseMatrix::from_vec(rows, cols, v).unwrap()
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = ramp(7, 5, 0.1);
        let b = ramp(5, 3, 0.7);
        let c = ramp(7, 3, 1.3);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-14);
        assert!(
            a.matmul_tn(&c)
                .unwrap()
                .max_abs_diff(&naive(&a.transpose(), &c))
                < 1e-14
        );
        assert!(
            c.matmul_nt(&b)
                .unwrap()
                .max_abs_diff(&naive(&c, &b.transpose()))
                < 1e-14
        );
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let m = DenseMatrix::from_rows(&[[0.2, 0.4, 0.4], [0.5, 0.5, 0.0]]);
        assert_eq!(m.argmax_row(0), 1);
        assert_eq!(m.argmax_row(1), 0);
    }

    #[test]
    fn parallel_path_is_bit_identical() {
        let a = ramp(300, 40, 0.3);
        let b = ramp(40, 30, 0.9);
        let big = a.matmul(&b).unwrap();
        let serial = DenseMatrix::from_rows(
            &(0..300)
                .map(|i| {
                    let row = a.select_rows(&[i]);
                    row.matmul(&b).unwrap().into_values()
                })
                .collect::<Vec<_>>(),
        );
        assert_eq!(big, serial);
    }
}
