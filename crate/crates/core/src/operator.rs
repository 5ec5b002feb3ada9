//! Propagation operators built from a graph, plus the dense spectral oracle.
//!
//! All constructors are symmetric by construction: entry `(i, j)` is formed as
//! `a_ij * (s_i * s_j)`, and floating-point multiplication commutes, so the
//! stored matrix equals its transpose bit for bit.
//!
//! Isolated nodes get `D^{-1/2}_ii = 0`, which leaves their rows of the
//! normalized adjacency empty. The renormalized operator never needs this
//! convention because its degrees are at least `lambda_self`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{degree_vector, SparseGraph};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// `D̃^{-1/2} (A + λI) D̃^{-1/2}`
    Renormalized,
    /// `I - D^{-1/2} A D^{-1/2}`
    NormalizedLaplacian,
    /// `(2 / λ_max) L - I`
    ScaledLaplacian,
    /// `D^{-1/2} A D^{-1/2}`
    FirstOrder,
    /// `I + D^{-1/2} A D^{-1/2}`
    SingleParam,
    Identity,
}

/// Immutable square sparse operator tagged with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    kind: OperatorKind,
}

impl SparseOperator {
    pub fn new(matrix: CsrMatrix, kind: OperatorKind) -> Self {
        assert_eq!(matrix.rows(), matrix.cols(), "operators are square");
        Self { matrix, kind }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CsrMatrix::identity(n), OperatorKind::Identity)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.matrix.to_dense()
    }
}

/// `v / √(d_i d_j)`, zero when either degree is zero.
fn sym_normalize(m: &CsrMatrix, degrees: &[f64]) -> CsrMatrix {
    m.map_entries(|i, j, v| {
        let dd = degrees[i] * degrees[j];
        if dd > 0.0 {
            v / dd.sqrt()
        } else {
            0.0
        }
    })
}

/// `D^{-1/2} A D^{-1/2}` with the zero convention for isolated nodes.
fn normalized_adjacency(g: &SparseGraph) -> CsrMatrix {
    sym_normalize(g.adjacency(), &degree_vector(g))
}

/// The renormalization trick: `D̃^{-1/2} Ã D̃^{-1/2}` with `Ã = A + λI`.
pub fn renormalized_adjacency(g: &SparseGraph, lambda_self: f64) -> Result<SparseOperator> {
    if !(lambda_self.is_finite() && lambda_self > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_self must be > 0, got {lambda_self}"
        )));
    }
    let tilde = g.adjacency().add_diagonal(lambda_self);
    let degrees: Vec<f64> = (0..tilde.rows()).map(|i| tilde.row_sum(i)).collect();
    Ok(SparseOperator::new(
        sym_normalize(&tilde, &degrees),
        OperatorKind::Renormalized,
    ))
}

pub fn normalized_laplacian(g: &SparseGraph) -> SparseOperator {
    let m = normalized_adjacency(g).scale(-1.0).add_diagonal(1.0);
    SparseOperator::new(m, OperatorKind::NormalizedLaplacian)
}

pub fn first_order_operator(g: &SparseGraph) -> SparseOperator {
    SparseOperator::new(normalized_adjacency(g), OperatorKind::FirstOrder)
}

pub fn single_param_operator(g: &SparseGraph) -> SparseOperator {
    SparseOperator::new(
        normalized_adjacency(g).add_diagonal(1.0),
        OperatorKind::SingleParam,
    )
}

/// Rescales a Laplacian so its spectrum maps from `[0, λ_max]` onto `[-1, 1]`.
pub fn scaled_laplacian(laplacian: &SparseOperator, lambda_max: f64) -> Result<SparseOperator> {
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_max must be > 0, got {lambda_max}"
        )));
    }
    let c = 2.0 / lambda_max;
    let m = laplacian.matrix().scale(c).add_diagonal(-1.0);
    Ok(SparseOperator::new(m, OperatorKind::ScaledLaplacian))
}

/// Largest eigenvalue of a symmetric operator by Lanczos iteration with full
/// reorthogonalization.
///
/// Stops once the Ritz residual `‖Lv - ρv‖` of the top Ritz pair drops to
/// `tol`, which bounds the distance from `ρ` to the spectrum by `tol`. The
/// Krylov dimension is capped at `min(n, max_iter)`.
pub fn estimate_lambda_max(op: &SparseOperator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = op.n();
    if n == 0 {
        return Ok(0.0);
    }
    let m = op.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a4b_da4a_0001);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut rho = 0.0;
    for j in 0..max_iter.min(n) {
        let mut w = m.mul_vec(&q);
        let a = dot(&q, &w);
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let (theta, last) = top_ritz_pair(&alpha, &beta);
        rho = theta;
        if (b * last).abs() <= tol || b <= f64::EPSILON * (1.0 + a.abs()) || j + 1 == n {
            return Ok(rho);
        }
        beta.push(b);
        q = w.into_iter().map(|x| x / b).collect();
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        estimate: rho,
    })
}

/// Largest eigenvalue of the tridiagonal matrix and the last component of its
/// unit eigenvector.
fn top_ritz_pair(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let top = eig.eigenvalues.imax();
    (eig.eigenvalues[top], eig.eigenvectors[(k - 1, top)])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Sparse-dense product `op · x`.
pub fn spmm(op: &SparseOperator, x: &DenseMatrix) -> Result<DenseMatrix> {
    op.matrix().spmm(x)
}

/// Largest dense-matrix size accepted by the eigendecomposition oracle.
pub const SPECTRAL_ORACLE_MAX_N: usize = 256;

/// Applies `U g(Λ) Uᵀ x` through a full eigendecomposition of `laplacian`.
/// Quadratic memory and cubic time; intended as a reference for small graphs.
pub fn exact_spectral_filter(
    laplacian: &DenseMatrix,
    filter: impl Fn(f64) -> f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = laplacian.rows();
    if laplacian.cols() != n || x.len() != n {
        return Err(Error::DimensionMismatch {
            op: "exact_spectral_filter",
            left: laplacian.shape(),
            right: (x.len(), 1),
        });
    }
    if n > SPECTRAL_ORACLE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "spectral oracle limited to n <= {SPECTRAL_ORACLE_MAX_N}, got {n}"
        )));
    }
    let scale = laplacian.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (laplacian[(i, j)] - laplacian[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let eig = SymmetricEigen::new(dense_to_na(laplacian));
    let xv = DVector::from_column_slice(x);
    let spectral = eig.eigenvectors.transpose() * xv;
    let filtered = DVector::from_iterator(
        n,
        spectral
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, &lam)| c * filter(lam)),
    );
    Ok((eig.eigenvectors * filtered).iter().copied().collect())
}

/// Eigenvalues of a small symmetric dense matrix in ascending order.
pub fn dense_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(dense_to_na(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn dense_to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> SparseGraph {
        SparseGraph::from_edge_list(&[(0, 1, 1.0)], 2, true).unwrap()
    }

    #[test]
    fn renormalized_on_edgeless_graph_is_identity() {
        let op = renormalized_adjacency(&SparseGraph::empty(3), 1.0).unwrap();
        assert_eq!(op.to_dense(), DenseMatrix::identity(3));
        assert_eq!(op.kind(), OperatorKind::Renormalized);
    }

    #[test]
    fn renormalized_single_edge_is_all_halves() {
        let op = renormalized_adjacency(&edge(), 1.0).unwrap();
        assert_eq!(op.to_dense(), DenseMatrix::filled(2, 2, 0.5));
    }

    #[test]
    fn renormalized_rejects_nonpositive_lambda() {
        assert!(renormalized_adjacency(&edge(), 0.0).is_err());
    }

    #[test]
    fn laplacian_small_cases() {
        assert_eq!(
            normalized_laplacian(&SparseGraph::empty(2)).to_dense(),
            DenseMatrix::identity(2)
        );
        let l = normalized_laplacian(&edge());
        assert_eq!(
            l.to_dense(),
            DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]])
        );
        let eig = dense_eigenvalues(&l.to_dense());
        assert!((eig[0] - 0.0).abs() < 1e-12 && (eig[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_nodes_keep_unit_laplacian_diagonal() {
        let g = SparseGraph::from_edge_list(&[(0, 1, 1.0)], 3, true).unwrap();
        let l = normalized_laplacian(&g);
        assert_eq!(l.matrix().row(2).collect::<Vec<_>>(), vec![(2, 1.0)]);
        assert_eq!(first_order_operator(&g).matrix().row_nnz(2), 0);
    }

    #[test]
    fn first_order_and_single_param_small_cases() {
        let empty = SparseGraph::empty(2);
        assert_eq!(
            first_order_operator(&empty).to_dense(),
            DenseMatrix::zeros(2, 2)
        );
        assert_eq!(
            single_param_operator(&empty).to_dense(),
            DenseMatrix::identity(2)
        );
        assert_eq!(
            first_order_operator(&edge()).to_dense(),
            DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])
        );
        assert_eq!(
            single_param_operator(&edge()).to_dense(),
            DenseMatrix::filled(2, 2, 1.0)
        );
    }

    #[test]
    fn scaled_laplacian_cases() {
        let l = normalized_laplacian(&SparseGraph::empty(2));
        let s = scaled_laplacian(&l, 2.0).unwrap();
        assert_eq!(s.to_dense(), DenseMatrix::zeros(2, 2));
        assert_eq!(s.kind(), OperatorKind::ScaledLaplacian);
        let s = scaled_laplacian(&normalized_laplacian(&edge()), 2.0).unwrap();
        let eig = dense_eigenvalues(&s.to_dense());
        assert!((eig[0] + 1.0).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
        assert!(scaled_laplacian(&l, 0.0).is_err());
        assert!(scaled_laplacian(&l, -1.0).is_err());
    }

    #[test]
    fn lambda_max_small_cases() {
        let k2 = normalized_laplacian(&edge());
        let lam = estimate_lambda_max(&k2, 1e-6, 1000).unwrap();
        assert!((lam - 2.0).abs() <= 1e-6);
        let i3 = SparseOperator::identity(3);
        assert!((estimate_lambda_max(&i3, 1e-6, 1000).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_max_reports_non_convergence() {
        // Path graph: tiny spectral gap at the top; one iteration is not enough.
        let pairs: Vec<_> = (0..40).map(|i| (i, i + 1, 1.0)).collect();
        let g = SparseGraph::from_edge_list(&pairs, 41, true).unwrap();
        let err = estimate_lambda_max(&normalized_laplacian(&g), 1e-12, 1).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn spmm_identity_and_zero() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(spmm(&SparseOperator::identity(3), &x).unwrap(), x);
        let zero = SparseOperator::new(CsrMatrix::zeros(3, 3), OperatorKind::FirstOrder);
        assert_eq!(spmm(&zero, &x).unwrap(), DenseMatrix::zeros(3, 2));
        assert!(spmm(&SparseOperator::identity(2), &x).is_err());
    }

    #[test]
    fn spectral_filter_trivial_filters() {
        let g = SparseGraph::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.0)], 4, true)
            .unwrap();
        let l = normalized_laplacian(&g).to_dense();
        let x = [0.3, -1.0, 2.0, 0.5];
        let same = exact_spectral_filter(&l, |_| 1.0, &x).unwrap();
        let lx = exact_spectral_filter(&l, |lam| lam, &x).unwrap();
        let want = l.matmul(&DenseMatrix::column(&x)).unwrap();
        for i in 0..4 {
            assert!((same[i] - x[i]).abs() < 1e-12);
            assert!((lx[i] - want[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_filter_rejects_asymmetric_input() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(
            exact_spectral_filter(&m, |l| l, &[1.0, 1.0]),
            Err(Error::NotSymmetric)
        ));
    }
}
