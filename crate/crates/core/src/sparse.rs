//! Compressed sparse row storage and sparse-dense products.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 1 << 15;

/// CSR matrix. Column indices are strictly increasing within each row and
/// no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut indices = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        for (i, &d) in diag.iter().enumerate() {
            if d != 0.0 {
                indices.push(i);
                values.push(d);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: n,
            cols: n,
            indptr,
            indices,
            values,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are combined with `merge`; zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        merge: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i >= rows {
                return Err(Error::IndexOutOfRange { index: i, n: rows });
            }
            if j >= cols {
                return Err(Error::IndexOutOfRange { index: j, n: cols });
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                let slot = values.last_mut().expect("previous entry");
                *slot = merge(*slot, v);
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        let mut m = Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.prune_zeros();
        Ok(m)
    }

    /// Assembles a matrix from per-row `(col, value)` lists that are already
    /// sorted by column without duplicates.
    pub(crate) fn from_sorted_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in &rows {
            for &(j, v) in row {
                debug_assert!(j < cols);
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let rows = (0..m.rows())
            .map(|i| {
                m.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(m.cols(), rows)
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
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

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i` in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[self.indptr[i]..self.indptr[i + 1]].iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates all stored `(row, col, value)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Same sparsity pattern, values transformed by `f(row, col, value)`.
    /// Entries mapped to zero are dropped.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] = f(i, self.indices[k], self.values[k]);
            }
        }
        out.prune_zeros();
        out
    }

    /// `self + c·I` for square matrices.
    pub fn add_diagonal(&self, c: f64) -> Self {
        assert_eq!(self.rows, self.cols, "add_diagonal needs a square matrix");
        let rows = (0..self.rows)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.row_nnz(i) + 1);
                let mut placed = false;
                for (j, v) in self.row(i) {
                    if !placed && j >= i {
                        if j == i {
                            row.push((j, v + c));
                            placed = true;
                            continue;
                        }
                        row.push((i, c));
                        placed = true;
                    }
                    row.push((j, v));
                }
                if !placed {
                    row.push((i, c));
                }
                row
            })
            .collect();
        Self::from_sorted_rows(self.cols, rows)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.transpose() == *self
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            out[(i, j)] = v;
        }
        out
    }

    /// `self · x`. Each output row accumulates in column-index order.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != x.rows() {
            return Err(Error::DimensionMismatch {
                op: "spmm",
                left: self.shape(),
                right: x.shape(),
            });
        }
        let m = x.cols();
        let mut out = DenseMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (j, a) in self.row(i) {
                for (o, &b) in out_row.iter_mut().zip(x.row(j)) {
                    *o += a * b;
                }
            }
        };
        if self.nnz() * m >= PAR_THRESHOLD {
            out.values_mut()
                .par_chunks_mut(m)
                .enumerate()
                .for_each(kernel);
        } else {
            out.values_mut().chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · g`, scattering row by row in a fixed order.
    pub fn spmm_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != g.rows() {
            return Err(Error::DimensionMismatch {
                op: "spmm_transpose",
                left: self.shape(),
                right: g.shape(),
            });
        }
        let m = g.cols();
        let mut out = DenseMatrix::zeros(self.cols, m);
        for i in 0..self.rows {
            let g_row = g.row(i);
            for (j, a) in self.row(i) {
                for (o, &b) in out.row_mut(j).iter_mut().zip(g_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, a)| a * v[j]).sum())
            .collect()
    }

    /// Scales every stored value of row `i` by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        assert_eq!(scale.len(), self.rows);
        self.map_entries(|i, _, v| v * scale[i])
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_entries(|_, _, v| c * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_sort() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (0, 1, 5.0)],
            f64::max,
        )
        .unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(0, 3.0), (2, 1.0)]);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        let err = CsrMatrix::from_triplets(2, 2, vec![(0, 2, 1.0)], f64::max).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, n: 2 }));
    }

    #[test]
    fn add_diagonal_inserts_in_order() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 2, 1.0), (1, 0, 1.0), (1, 1, 4.0), (2, 0, 1.0)],
            f64::max,
        )
        .unwrap();
        let d = m.add_diagonal(0.5);
        assert_eq!(
            d.row(0).collect::<Vec<_>>(),
            vec![(0, 0.5), (2, 1.0)]
        );
        assert_eq!(d.row(1).collect::<Vec<_>>(), vec![(0, 1.0), (1, 4.5)]);
        assert_eq!(d.row(2).collect::<Vec<_>>(), vec![(0, 1.0), (2, 0.5)]);
    }

    #[test]
    fn transpose_product_matches_dense() {
        let m = CsrMatrix::from_triplets(
            3,
            2,
            vec![(0, 1, 2.0), (2, 0, -1.0), (1, 1, 0.5)],
            f64::max,
        )
        .unwrap();
        let g = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let want = m.to_dense().matmul_tn(&g).unwrap();
        assert_eq!(m.spmm_transpose(&g).unwrap(), want);
        assert_eq!(m.transpose().spmm(&g).unwrap(), want);
    }
}
