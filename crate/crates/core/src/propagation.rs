//! Per-layer propagation models.
//!
//! | variant | pre-activation |
//! |---------|----------------|
//! | `cheb:K` | `Σ_k T_k(L̃) X Θ_k` |
//! | `first-order` | `X Θ_0 + D^{-1/2} A D^{-1/2} X Θ_1` |
//! | `single` | `(I + D^{-1/2} A D^{-1/2}) X Θ` |
//! | `renorm[:λ]` | `D̃^{-1/2} Ã D̃^{-1/2} X Θ`, `Ã = A + λI` |
//! | `first-term` | `D^{-1/2} A D^{-1/2} X Θ` |
//! | `mlp` | `X Θ` |

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::autodiff::{SparseArg, Tape, Var};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::operator::{
    estimate_lambda_max, first_order_operator, normalized_laplacian, renormalized_adjacency,
    scaled_laplacian, single_param_operator, SparseOperator,
};

pub const MAX_CHEBYSHEV_ORDER: usize = 8;

/// Lanczos settings used when `λ_max` is estimated.
pub const LAMBDA_MAX_TOL: f64 = 1e-6;
pub const LAMBDA_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagationKind {
    Chebyshev { order: usize },
    FirstOrder,
    SingleParam,
    Renormalized { lambda_self: f64 },
    FirstOrderTermOnly,
    Mlp,
}

impl PropagationKind {
    pub const RENORM: Self = Self::Renormalized { lambda_self: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Chebyshev { order } if !(1..=MAX_CHEBYSHEV_ORDER).contains(&order) => {
                Err(Error::InvalidParameter(format!(
                    "Chebyshev order must lie in [1, {MAX_CHEBYSHEV_ORDER}], got {order}"
                )))
            }
            Self::Renormalized { lambda_self } if !(lambda_self.is_finite() && lambda_self > 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "lambda_self must be > 0, got {lambda_self}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Number of weight matrices a layer of this kind carries.
    pub fn weight_count(&self) -> usize {
        match *self {
            Self::Chebyshev { order } => order + 1,
            Self::FirstOrder => 2,
            _ => 1,
        }
    }

    /// The variants compared against each other on the citation benchmarks.
    pub fn comparison_set() -> Vec<Self> {
        vec![
            Self::Chebyshev { order: 3 },
            Self::Chebyshev { order: 2 },
            Self::FirstOrder,
            Self::SingleParam,
            Self::RENORM,
            Self::FirstOrderTermOnly,
            Self::Mlp,
        ]
    }
}

impl fmt::Display for PropagationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Chebyshev { order } => write!(f, "cheb:{order}"),
            Self::FirstOrder => f.write_str("first-order"),
            Self::SingleParam => f.write_str("single"),
            Self::Renormalized { lambda_self } if lambda_self == 1.0 => f.write_str("renorm"),
            Self::Renormalized { lambda_self } => write!(f, "renorm:{lambda_self}"),
            Self::FirstOrderTermOnly => f.write_str("first-term"),
            Self::Mlp => f.write_str("mlp"),
        }
    }
}

impl FromStr for PropagationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown propagation `{s}`"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match (head, arg) {
            ("renorm", None) => Self::RENORM,
            ("renorm", Some(a)) => Self::Renormalized {
                lambda_self: a.parse().map_err(|_| bad())?,
            },
            ("cheb", Some(a)) => Self::Chebyshev {
                order: a.parse().map_err(|_| bad())?,
            },
            ("first-order", None) => Self::FirstOrder,
            ("single", None) => Self::SingleParam,
            ("first-term", None) => Self::FirstOrderTermOnly,
            ("mlp", None) => Self::Mlp,
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// How `λ_max` is chosen when rescaling the Laplacian for Chebyshev filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMax {
    /// Lanczos iteration on the normalized Laplacian.
    Estimate,
    /// A fixed value, typically 2.
    Fixed(f64),
}

impl fmt::Display for LambdaMax {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Estimate => f.write_str("auto"),
            Self::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaMax {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Estimate);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad lambda-max `{s}`")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda-max must be > 0, got {v}")));
        }
        Ok(Self::Fixed(v))
    }
}

/// Operators precomputed once per graph for one propagation kind.
#[derive(Debug, Clone)]
pub struct PropagationOps {
    n: usize,
    renormalized: Option<SparseOperator>,
    first_order: Option<SparseOperator>,
    single_param: Option<SparseOperator>,
    scaled_laplacian: Option<SparseOperator>,
    lambda_max: Option<f64>,
}

impl PropagationOps {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            renormalized: None,
            first_order: None,
            single_param: None,
            scaled_laplacian: None,
            lambda_max: None,
        }
    }

    pub fn build(g: &SparseGraph, kind: PropagationKind, lambda_max: LambdaMax) -> Result<Self> {
        kind.validate()?;
        let mut ops = Self::empty(g.n());
        match kind {
            PropagationKind::Renormalized { lambda_self } => {
                ops.renormalized = Some(renormalized_adjacency(g, lambda_self)?);
            }
            PropagationKind::FirstOrder | PropagationKind::FirstOrderTermOnly => {
                ops.first_order = Some(first_order_operator(g));
            }
            PropagationKind::SingleParam => {
                ops.single_param = Some(single_param_operator(g));
            }
            PropagationKind::Chebyshev { .. } => {
                let laplacian = normalized_laplacian(g);
                let lam = match lambda_max {
                    LambdaMax::Fixed(v) => v,
                    LambdaMax::Estimate => {
                        match estimate_lambda_max(&laplacian, LAMBDA_MAX_TOL, LAMBDA_MAX_ITERS) {
                            Ok(v) => v,
                            Err(Error::NotConverged { iterations, estimate }) if estimate > 0.0 => {
                                warn!(
                                    "lambda-max estimate not converged after {iterations} iterations; using {estimate}"
                                );
                                estimate
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                ops.scaled_laplacian = Some(scaled_laplacian(&laplacian, lam)?);
                ops.lambda_max = Some(lam);
            }
            PropagationKind::Mlp => {}
        }
        Ok(ops)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `λ_max` used for the scaled Laplacian, when one was built.
    pub fn lambda_max(&self) -> Option<f64> {
        self.lambda_max
    }

    /// The operator a variant multiplies by, or `None` for the MLP.
    pub fn operator(&self, kind: PropagationKind) -> Result<Option<&SparseOperator>> {
        let slot = match kind {
            PropagationKind::Mlp => return Ok(None),
            PropagationKind::Renormalized { .. } => &self.renormalized,
            PropagationKind::FirstOrder | PropagationKind::FirstOrderTermOnly => &self.first_order,
            PropagationKind::SingleParam => &self.single_param,
            PropagationKind::Chebyshev { .. } => &self.scaled_laplacian,
        };
        slot.as_ref()
            .map(Some)
            .ok_or_else(|| Error::MissingOperator(kind.to_string()))
    }
}

/// `terms[k] = T_k(L̃) X` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebBasis {
    pub terms: Vec<DenseMatrix>,
}

/// Builds the Chebyshev basis with the three-term recurrence
/// `T_k = 2 L̃ T_{k-1} - T_{k-2}`.
pub fn chebyshev_basis(l_tilde: &SparseOperator, x: &DenseMatrix, order: usize) -> Result<ChebBasis> {
    if order == 0 {
        return Err(Error::InvalidParameter("Chebyshev order must be >= 1".into()));
    }
    let mut terms = Vec::with_capacity(order + 1);
    terms.push(x.clone());
    terms.push(l_tilde.matrix().spmm(x)?);
    for k in 2..=order {
        let mut next = l_tilde.matrix().spmm(&terms[k - 1])?.scale(2.0);
        next.axpy(-1.0, &terms[k - 2])?;
        terms.push(next);
    }
    Ok(ChebBasis { terms })
}

fn check_weights(kind: PropagationKind, h: &DenseMatrix, weights: &[DenseMatrix]) -> Result<()> {
    if weights.len() != kind.weight_count() {
        return Err(Error::InvalidParameter(format!(
            "{kind} takes {} weight matrices, got {}",
            kind.weight_count(),
            weights.len()
        )));
    }
    let cols = weights[0].cols();
    for w in weights {
        if w.rows() != h.cols() || w.cols() != cols {
            return Err(Error::DimensionMismatch {
                op: "propagate",
                left: h.shape(),
                right: w.shape(),
            });
        }
    }
    Ok(())
}

/// Evaluates one propagation step directly (no tape). Chebyshev layers go
/// through the explicit basis of `h`.
pub fn propagate(
    kind: PropagationKind,
    ops: &PropagationOps,
    h: &DenseMatrix,
    weights: &[DenseMatrix],
) -> Result<DenseMatrix> {
    check_weights(kind, h, weights)?;
    let op = ops.operator(kind)?;
    match (kind, op) {
        (PropagationKind::Mlp, _) => h.matmul(&weights[0]),
        (PropagationKind::Chebyshev { order }, Some(l_tilde)) => {
            let basis = chebyshev_basis(l_tilde, h, order)?;
            let mut out = basis.terms[0].matmul(&weights[0])?;
            for (t, w) in basis.terms.iter().zip(weights).skip(1) {
                out.add_assign(&t.matmul(w)?)?;
            }
            Ok(out)
        }
        (PropagationKind::FirstOrder, Some(norm)) => {
            let mut out = h.matmul(&weights[0])?;
            out.add_assign(&norm.matrix().spmm(&h.matmul(&weights[1])?)?)?;
            Ok(out)
        }
        (_, Some(op)) => op.matrix().spmm(&h.matmul(&weights[0])?),
        (_, None) => Err(Error::MissingOperator(kind.to_string())),
    }
}

/// Layer input as seen by the tape.
#[derive(Debug)]
pub enum LayerInput<'a> {
    Dense(Var),
    /// Constant sparse features (possibly a dropped-out copy).
    Sparse(SparseArg<'a>),
    /// `X = I_N`, optionally with a dropout mask on the diagonal, so that
    /// `X Θ` reduces to a (row-scaled) `Θ`.
    Identity { n: usize, scale: Option<Vec<f64>> },
}

impl LayerInput<'_> {
    fn width(&self, tape: &Tape<'_>) -> usize {
        match self {
            Self::Dense(v) => tape.value(*v).cols(),
            Self::Sparse(m) => m.cols(),
            Self::Identity { n, .. } => *n,
        }
    }
}

/// Records `input · w` for one weight matrix.
fn project<'a>(tape: &mut Tape<'a>, input: &LayerInput<'a>, w: Var) -> Result<Var> {
    match input {
        LayerInput::Dense(h) => tape.matmul(*h, w),
        LayerInput::Sparse(m) => tape.spmm(m.clone(), w),
        LayerInput::Identity { n, scale } => {
            let rows = tape.value(w).rows();
            if rows != *n {
                return Err(Error::DimensionMismatch {
                    op: "identity input",
                    left: (*n, *n),
                    right: tape.value(w).shape(),
                });
            }
            match scale {
                None => Ok(w),
                Some(s) => tape.row_scale(s.clone(), w),
            }
        }
    }
}

/// Records one propagation step. Every variant projects first (`X Θ_k`) and
/// then applies the sparse operator, which is the cheap order when the input
/// is wider than the output. Chebyshev sums use Clenshaw's recurrence.
pub fn propagate_on_tape<'a>(
    tape: &mut Tape<'a>,
    kind: PropagationKind,
    ops: &'a PropagationOps,
    input: LayerInput<'a>,
    weights: &[Var],
) -> Result<Var> {
    if weights.len() != kind.weight_count() {
        return Err(Error::InvalidParameter(format!(
            "{kind} takes {} weight matrices, got {}",
            kind.weight_count(),
            weights.len()
        )));
    }
    let width = input.width(tape);
    for &w in weights {
        if tape.value(w).rows() != width {
            return Err(Error::DimensionMismatch {
                op: "propagate",
                left: (ops.n(), width),
                right: tape.value(w).shape(),
            });
        }
    }
    let op = ops.operator(kind)?.map(|o| o.matrix());
    let projected = weights
        .iter()
        .map(|&w| project(tape, &input, w))
        .collect::<Result<Vec<_>>>()?;
    match (kind, op) {
        (PropagationKind::Mlp, _) => Ok(projected[0]),
        (PropagationKind::FirstOrder, Some(norm)) => {
            let mixed = tape.spmm_symmetric(norm, projected[1])?;
            tape.add(projected[0], mixed)
        }
        (PropagationKind::Chebyshev { order }, Some(l_tilde)) => {
            // b_k = P_k + 2 L̃ b_{k+1} - b_{k+2};  result = P_0 + L̃ b_1 - b_2
            let mut b1: Option<Var> = None;
            let mut b2: Option<Var> = None;
            for k in (1..=order).rev() {
                let mut bk = projected[k];
                if let Some(next) = b1 {
                    let l = tape.spmm_symmetric(l_tilde, next)?;
                    let l2 = tape.scale(2.0, l);
                    bk = tape.add(bk, l2)?;
                }
                if let Some(next2) = b2 {
                    bk = tape.sub(bk, next2)?;
                }
                b2 = b1;
                b1 = Some(bk);
            }
            let b1 = b1.expect("order >= 1");
            let l = tape.spmm_symmetric(l_tilde, b1)?;
            let mut out = tape.add(projected[0], l)?;
            if let Some(b2) = b2 {
                out = tape.sub(out, b2)?;
            }
            Ok(out)
        }
        (_, Some(m)) => tape.spmm_symmetric(m, projected[0]),
        (_, None) => Err(Error::MissingOperator(kind.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::OperatorKind;
    use crate::sparse::CsrMatrix;

    fn sample_x() -> DenseMatrix {
        DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]])
    }

    #[test]
    fn grammar_round_trips() {
        for s in ["renorm", "renorm:0.5", "cheb:3", "first-order", "single", "first-term", "mlp"] {
            let k: PropagationKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("cheb:0".parse::<PropagationKind>().is_err());
        assert!("cheb:9".parse::<PropagationKind>().is_err());
        assert!("cheb".parse::<PropagationKind>().is_err());
        assert!("renorm:-1".parse::<PropagationKind>().is_err());
        assert!("gat".parse::<PropagationKind>().is_err());
        assert_eq!("renorm:1".parse::<PropagationKind>().unwrap(), PropagationKind::RENORM);
    }

    #[test]
    fn basis_on_zero_operator() {
        let zero = SparseOperator::new(CsrMatrix::zeros(3, 3), OperatorKind::ScaledLaplacian);
        let x = sample_x();
        let b = chebyshev_basis(&zero, &x, 2).unwrap();
        assert_eq!(b.terms, vec![x.clone(), DenseMatrix::zeros(3, 2), x.scale(-1.0)]);
    }

    #[test]
    fn basis_on_identity_operator() {
        let x = sample_x();
        let b = chebyshev_basis(&SparseOperator::identity(3), &x, 2).unwrap();
        assert_eq!(b.terms, vec![x.clone(), x.clone(), x]);
    }

    #[test]
    fn basis_rejects_mismatched_input() {
        let x = DenseMatrix::zeros(4, 1);
        assert!(chebyshev_basis(&SparseOperator::identity(3), &x, 1).is_err());
    }

    #[test]
    fn mlp_with_identity_weights_is_identity() {
        let x = sample_x();
        let ops = PropagationOps::empty(3);
        let out = propagate(PropagationKind::Mlp, &ops, &x, &[DenseMatrix::identity(2)]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn renorm_on_edgeless_graph_reduces_to_projection() {
        let x = sample_x();
        let w = DenseMatrix::from_rows(&[[0.5, 1.0, -1.0], [2.0, 0.0, 0.25]]);
        let ops = PropagationOps::build(&SparseGraph::empty(3), PropagationKind::RENORM, LambdaMax::Estimate)
            .unwrap();
        let out = propagate(PropagationKind::RENORM, &ops, &x, &[w.clone()]).unwrap();
        assert_eq!(out, x.matmul(&w).unwrap());
    }

    #[test]
    fn missing_operator_and_bad_shapes_are_errors() {
        let x = sample_x();
        let ops = PropagationOps::empty(3);
        assert!(matches!(
            propagate(PropagationKind::SingleParam, &ops, &x, &[DenseMatrix::identity(2)]),
            Err(Error::MissingOperator(_))
        ));
        assert!(propagate(PropagationKind::Mlp, &ops, &x, &[DenseMatrix::identity(3)]).is_err());
        assert!(propagate(
            PropagationKind::Mlp,
            &ops,
            &x,
            &[DenseMatrix::identity(2), DenseMatrix::identity(2)]
        )
        .is_err());
    }

    #[test]
    fn weight_counts() {
        assert_eq!(PropagationKind::Chebyshev { order: 3 }.weight_count(), 4);
        assert_eq!(PropagationKind::FirstOrder.weight_count(), 2);
        assert_eq!(PropagationKind::RENORM.weight_count(), 1);
    }
}
