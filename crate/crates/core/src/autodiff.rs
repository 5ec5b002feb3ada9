//! Reverse-mode differentiation over the handful of primitives a GCN needs.
//!
//! A [`Tape`] records each primitive together with its output value. Calling
//! [`Tape::backward`] walks the records in reverse and writes the adjoint of
//! every recorded parameter into [`Parameter::grad`]. A tape can be
//! differentiated once; record a new forward pass for the next step.

use std::ops::Deref;
use std::rc::Rc;

use rand::Rng as _;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sparse::CsrMatrix;

/// Floor applied inside `ln` by the cross-entropy.
pub const LN_CLAMP: f64 = 1e-12;

/// A trainable matrix and its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.values_mut().fill(0.0);
    }
}

/// A sparse constant recorded on a tape: borrowed from a longer-lived
/// operator cache, or shared when built per pass (e.g. dropped-out features).
#[derive(Debug, Clone)]
pub enum SparseArg<'a> {
    Borrowed(&'a CsrMatrix),
    Shared(Rc<CsrMatrix>),
}

impl Deref for SparseArg<'_> {
    type Target = CsrMatrix;

    fn deref(&self) -> &CsrMatrix {
        match self {
            Self::Borrowed(m) => m,
            Self::Shared(m) => m,
        }
    }
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<'a> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    SpMM {
        matrix: SparseArg<'a>,
        symmetric: bool,
        rhs: Var,
    },
    RowScale(Vec<f64>, Var),
    Relu(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(f64, Var),
    Mask(Vec<f64>, Var),
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        targets: Vec<(usize, usize)>,
    },
    L2(Vec<Var>),
    Sum(Var),
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    ops: Vec<Op<'a>>,
    values: Vec<DenseMatrix>,
    consumed: bool,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op<'a>, value: DenseMatrix) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.values[v.0]
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = &self.values[v.0];
        debug_assert_eq!(m.shape(), (1, 1));
        m.values()[0]
    }

    /// Records a constant.
    pub fn input(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Input, value)
    }

    /// Records parameter `index`; its gradient lands in `params[index]` on backward.
    pub fn param(&mut self, index: usize, p: &Parameter) -> Var {
        self.push(Op::Param(index), p.value.clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// Sparse constant times a recorded dense value.
    pub fn spmm(&mut self, matrix: impl Into<SparseArg<'a>>, rhs: Var) -> Result<Var> {
        self.spmm_arg(matrix.into(), false, rhs)
    }

    /// Like [`Tape::spmm`] for a matrix known to be symmetric, which lets the
    /// adjoint reuse the row-parallel forward kernel.
    pub fn spmm_symmetric(&mut self, matrix: &'a CsrMatrix, rhs: Var) -> Result<Var> {
        debug_assert!(matrix.is_symmetric());
        self.spmm_arg(SparseArg::Borrowed(matrix), true, rhs)
    }

    fn spmm_arg(&mut self, matrix: SparseArg<'a>, symmetric: bool, rhs: Var) -> Result<Var> {
        let value = matrix.spmm(self.value(rhs))?;
        Ok(self.push(
            Op::SpMM {
                matrix,
                symmetric,
                rhs,
            },
            value,
        ))
    }

    /// `diag(scale) · b`
    pub fn row_scale(&mut self, scale: Vec<f64>, b: Var) -> Result<Var> {
        let src = self.value(b);
        if scale.len() != src.rows() {
            return Err(Error::DimensionMismatch {
                op: "row_scale",
                left: (scale.len(), 1),
                right: src.shape(),
            });
        }
        let mut value = src.clone();
        for (i, &s) in scale.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.push(Op::RowScale(scale, b), value))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = relu(self.value(a));
        self.push(Op::Relu(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn scale(&mut self, c: f64, a: Var) -> Var {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(c, a), value)
    }

    /// Inverted dropout. Returns `a` itself when not training or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        check_dropout_rate(p)?;
        if !training || p == 0.0 {
            return Ok(a);
        }
        let (rows, cols) = self.value(a).shape();
        let mask = dropout_mask(rows * cols, p, rng);
        self.mask(a, mask)
    }

    /// Elementwise product with a fixed mask.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let src = self.value(a);
        if mask.len() != src.values().len() {
            return Err(Error::DimensionMismatch {
                op: "mask",
                left: src.shape(),
                right: (mask.len(), 1),
            });
        }
        let values = src.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = DenseMatrix::from_vec(src.rows(), src.cols(), values)?;
        Ok(self.push(Op::Mask(mask, a), value))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rowwise(self.value(a))?;
        Ok(self.push(Op::Softmax(a), value))
    }

    /// Summed cross-entropy of `probs` against one-hot `targets` over `mask`.
    pub fn masked_cross_entropy(
        &mut self,
        probs: Var,
        targets: &DenseMatrix,
        mask: &[usize],
    ) -> Result<Var> {
        let loss = masked_cross_entropy(self.value(probs), targets, mask)?;
        let mut pairs = Vec::with_capacity(mask.len());
        for &l in mask {
            for (f, &y) in targets.row(l).iter().enumerate() {
                if y != 0.0 {
                    pairs.push((l, f));
                }
            }
        }
        // Only one-hot targets are supported on the tape.
        debug_assert!(mask.iter().all(|&l| targets.row(l).iter().all(|&y| y == 0.0 || y == 1.0)));
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                targets: pairs,
            },
            DenseMatrix::filled(1, 1, loss),
        ))
    }

    /// `½ Σ v²` over the listed values.
    pub fn l2_penalty(&mut self, vars: &[Var]) -> Var {
        let total: f64 = vars.iter().map(|&v| self.value(v).sum_of_squares()).sum();
        self.push(Op::L2(vars.to_vec()), DenseMatrix::filled(1, 1, 0.5 * total))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), DenseMatrix::filled(1, 1, s))
    }

    /// Propagates adjoints from the scalar `loss` and overwrites the gradient
    /// of every parameter in `params`. Parameters never reached get zeros.
    pub fn backward(&mut self, loss: Var, params: &mut [Parameter]) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.values[loss.0].shape() != (1, 1) {
            return Err(Error::InvalidParameter(
                "backward needs a scalar loss".to_string(),
            ));
        }
        self.consumed = true;
        for p in params.iter_mut() {
            p.zero_grad();
        }

        let mut grads: Vec<Option<DenseMatrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Input => {}
                Op::Param(k) => {
                    let p = params.get_mut(*k).ok_or_else(|| {
                        Error::InvalidParameter(format!("parameter index {k} not supplied"))
                    })?;
                    p.grad.add_assign(&g)?;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(&self.values[b.0])?;
                    let gb = self.values[a.0].matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::SpMM {
                    matrix,
                    symmetric,
                    rhs,
                } => {
                    let gb = if *symmetric {
                        matrix.spmm(&g)?
                    } else {
                        matrix.spmm_transpose(&g)?
                    };
                    accumulate(&mut grads, *rhs, gb)?;
                }
                Op::RowScale(scale, b) => {
                    let mut gb = g;
                    for (i, &s) in scale.iter().enumerate() {
                        gb.row_mut(i).iter_mut().for_each(|x| *x *= s);
                    }
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&self.values[a.0], |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&self.values[idx], |gv, y| gv * (1.0 - y * y))?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0))?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Scale(c, a) => {
                    accumulate(&mut grads, *a, g.scale(*c))?;
                }
                Op::Mask(mask, a) => {
                    let mut ga = g;
                    for (x, m) in ga.values_mut().iter_mut().zip(mask) {
                        *x *= m;
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Softmax(a) => {
                    let y = &self.values[idx];
                    let mut ga = DenseMatrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (o, (p, q)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = p * (q - inner);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::CrossEntropy { probs, targets } => {
                    let upstream = g.values()[0];
                    let z = &self.values[probs.0];
                    let mut gz = DenseMatrix::zeros(z.rows(), z.cols());
                    for &(l, f) in targets {
                        let p = z[(l, f)];
                        // d/dp ln(max(p, clamp)) vanishes where the clamp is active.
                        if p > LN_CLAMP {
                            gz[(l, f)] -= upstream / p;
                        }
                    }
                    accumulate(&mut grads, *probs, gz)?;
                }
                Op::L2(vars) => {
                    let upstream = g.values()[0];
                    for &v in vars {
                        let gv = self.values[v.0].scale(upstream);
                        accumulate(&mut grads, v, gv)?;
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.values[a.0].shape();
                    accumulate(&mut grads, *a, DenseMatrix::filled(r, c, g.values()[0]))?;
                }
            }
        }
        Ok(())
    }
}

impl<'a> From<&'a CsrMatrix> for SparseArg<'a> {
    fn from(m: &'a CsrMatrix) -> Self {
        Self::Borrowed(m)
    }
}

impl From<Rc<CsrMatrix>> for SparseArg<'_> {
    fn from(m: Rc<CsrMatrix>) -> Self {
        Self::Shared(m)
    }
}

impl From<CsrMatrix> for SparseArg<'_> {
    fn from(m: CsrMatrix) -> Self {
        Self::Shared(Rc::new(m))
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Keep-mask with inverted scaling: kept entries are `1 / (1 - p)`, dropped are 0.
pub fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() >= p { keep } else { 0.0 })
        .collect()
}

pub fn relu(a: &DenseMatrix) -> DenseMatrix {
    a.map(|x| x.max(0.0))
}

/// Inverted dropout on a dense matrix; identity when `training` is false.
pub fn dropout(a: &DenseMatrix, p: f64, training: bool, rng: &mut Rng) -> Result<DenseMatrix> {
    check_dropout_rate(p)?;
    if !training || p == 0.0 {
        return Ok(a.clone());
    }
    let mask = dropout_mask(a.values().len(), p, rng);
    let values = a.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), values)
}

/// Inverted dropout over the stored entries of a sparse matrix. Implicit
/// zeros stay zero under any mask, so this matches dense dropout in law.
pub fn dropout_sparse(a: &CsrMatrix, p: f64, rng: &mut Rng) -> Result<CsrMatrix> {
    check_dropout_rate(p)?;
    if p == 0.0 {
        return Ok(a.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..a.nnz())
        .map(|_| if rng.random::<f64>() >= p { keep } else { 0.0 })
        .collect();
    let mut k = 0;
    Ok(a.map_entries(|_, _, v| {
        let out = v * mask[k];
        k += 1;
        out
    }))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rowwise(z: &DenseMatrix) -> Result<DenseMatrix> {
    if !z.is_finite() {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    Ok(out)
}

/// `-Σ_{l∈mask} Σ_f Y_lf ln max(Z_lf, 1e-12)`
pub fn masked_cross_entropy(z: &DenseMatrix, y: &DenseMatrix, mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if z.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            op: "masked_cross_entropy",
            left: z.shape(),
            right: y.shape(),
        });
    }
    let mut loss = 0.0;
    for &l in mask {
        if l >= z.rows() {
            return Err(Error::IndexOutOfRange {
                index: l,
                n: z.rows(),
            });
        }
        for (&p, &t) in z.row(l).iter().zip(y.row(l)) {
            if t != 0.0 {
                loss -= t * p.max(LN_CLAMP).ln();
            }
        }
    }
    Ok(loss)
}

/// `½ Σ θ²` over all entries of the given parameters.
pub fn l2_penalty<'p>(params: impl IntoIterator<Item = &'p Parameter>) -> f64 {
    0.5 * params
        .into_iter()
        .map(|p| p.value.sum_of_squares())
        .sum::<f64>()
}

/// Central finite differences `(f(θ+ε) - f(θ-ε)) / 2ε` for every entry of
/// every parameter. Independent of the tape; used to check [`Tape::backward`].
pub fn finite_difference_gradient<F>(
    mut loss_fn: F,
    params: &mut [Parameter],
    eps: f64,
) -> Result<Vec<DenseMatrix>>
where
    F: FnMut(&[Parameter]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let (rows, cols) = params[k].value.shape();
        let mut g = DenseMatrix::zeros(rows, cols);
        for e in 0..rows * cols {
            let orig = params[k].value.values()[e];
            params[k].value.values_mut()[e] = orig + eps;
            let plus = loss_fn(params)?;
            params[k].value.values_mut()[e] = orig - eps;
            let minus = loss_fn(params)?;
            params[k].value.values_mut()[e] = orig;
            g.values_mut()[e] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    Ok(out)
}
