//! Adam with bias correction.

use crate::autodiff::Parameter;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[Parameter]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One update using the gradients currently stored in `params`.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::InvalidParameter(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let t = state.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if p.grad.shape() != p.value.shape() || m.shape() != p.value.shape() {
            return Err(Error::DimensionMismatch {
                op: "adam_step",
                left: p.value.shape(),
                right: p.grad.shape(),
            });
        }
        let g = p.grad.values();
        let w = p.value.values_mut();
        for (((w, &g), m), v) in w
            .iter_mut()
            .zip(g)
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64, grad: f64) -> Parameter {
        let mut p = Parameter::new("w", DenseMatrix::filled(1, 1, value));
        p.grad = DenseMatrix::filled(1, 1, grad);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = vec![scalar(0.7, 0.0)];
        let mut st = AdamState::new(&ps);
        for _ in 0..5 {
            adam_step(&mut ps, &mut st, 0.01).unwrap();
        }
        assert_eq!(ps[0].value[(0, 0)], 0.7);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let mut ps = vec![scalar(0.0, 1.0)];
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, 0.01).unwrap();
        let step = -ps[0].value[(0, 0)];
        assert!((step - 0.01 / (1.0 + 1e-8)).abs() < 1e-15, "{step}");
    }

    #[test]
    fn first_step_ignores_gradient_scale() {
        let mut a = vec![scalar(0.0, 0.3)];
        let mut b = vec![scalar(0.0, 30.0)];
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        adam_step(&mut a, &mut sa, 0.01).unwrap();
        adam_step(&mut b, &mut sb, 0.01).unwrap();
        assert!((a[0].value[(0, 0)] - b[0].value[(0, 0)]).abs() <= 0.01 * 1e-6);
    }

    #[test]
    fn rejects_foreign_parameter_list() {
        let mut ps = vec![scalar(0.0, 1.0)];
        let mut st = AdamState::new(&[]);
        assert!(adam_step(&mut ps, &mut st, 0.01).is_err());
    }
}
