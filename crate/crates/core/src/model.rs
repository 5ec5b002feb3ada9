//! Layer stacks: the two-layer classifier, the tanh embedding model, and deep
//! (optionally residual) variants.

use std::rc::Rc;

use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dropout_mask, dropout_sparse, Parameter, SparseArg, Tape, Var};
use crate::data::Features;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::propagation::{propagate_on_tape, LambdaMax, LayerInput, PropagationKind, PropagationOps};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn record(self, tape: &mut Tape<'_>, v: Var) -> Var {
        match self {
            Self::Relu => tape.relu(v),
            Self::Tanh => tape.tanh(v),
            Self::Identity => v,
        }
    }
}

/// Which layer inputs are dropped out during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutPlacement {
    /// The input of every layer.
    AllLayers,
    /// Only the inputs of the first and the last layer.
    FirstAndLast,
}

/// How the labeled-node cross-entropy is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Widths of the hidden layers; empty gives a single-layer model.
    pub hidden_dims: Vec<usize>,
    #[serde(with = "display_fromstr")]
    pub propagation: PropagationKind,
    pub dropout_p: f64,
    /// Weight of `½‖Θ‖²` over the first layer's weights.
    pub l2_factor: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new validation-loss minimum.
    pub early_stop_window: Option<usize>,
    pub residual: bool,
    pub activation: Activation,
    pub seed: u64,
    #[serde(with = "display_fromstr")]
    pub lambda_max: LambdaMax,
    /// Return the weights of the best validation epoch instead of the last.
    pub restore_best: bool,
    pub dropout_placement: DropoutPlacement,
    /// Replace the last graph layer with a dense softmax classifier.
    pub linear_head: bool,
    pub loss_reduction: LossReduction,
}

impl Default for GcnConfig {
    /// The citation-network protocol: 16 hidden units, dropout 0.5,
    /// L2 5e-4, Adam at 0.01 for up to 200 epochs, early stopping window 10.
    fn default() -> Self {
        Self {
            hidden_dims: vec![16],
            propagation: PropagationKind::RENORM,
            dropout_p: 0.5,
            l2_factor: 5e-4,
            learning_rate: 0.01,
            max_epochs: 200,
            early_stop_window: Some(10),
            residual: false,
            activation: Activation::Relu,
            seed: 0,
            lambda_max: LambdaMax::Estimate,
            restore_best: false,
            dropout_placement: DropoutPlacement::AllLayers,
            linear_head: false,
            loss_reduction: LossReduction::Sum,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidParameter(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_factor.is_finite() && self.l2_factor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "l2 factor must be >= 0, got {}",
                self.l2_factor
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be >= 1".into()));
        }
        if self.early_stop_window == Some(0) {
            return Err(Error::InvalidParameter("early stopping window must be >= 1".into()));
        }
        if self.linear_head && self.hidden_dims.is_empty() {
            return Err(Error::InvalidParameter(
                "a linear head needs at least one graph layer below it".into(),
            ));
        }
        Ok(())
    }

    /// A model with `depth` layers of width 16 as used for the depth study.
    pub fn depth_study(depth: usize, residual: bool, seed: u64) -> Self {
        Self {
            hidden_dims: vec![16; depth.saturating_sub(1)],
            max_epochs: 400,
            early_stop_window: None,
            residual,
            seed,
            dropout_placement: DropoutPlacement::FirstAndLast,
            ..Self::default()
        }
    }

    /// Three tanh graph layers (widths 4, 4, 2) topped by a softmax classifier,
    /// trained without regularization for `iterations` steps.
    pub fn karate_embedding(iterations: usize, seed: u64) -> Self {
        Self {
            hidden_dims: vec![4, 4, 2],
            dropout_p: 0.0,
            l2_factor: 0.0,
            max_epochs: iterations,
            early_stop_window: None,
            activation: Activation::Tanh,
            seed,
            linear_head: true,
            ..Self::default()
        }
    }
}

mod display_fromstr {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Uniform draws from `±√(6 / (fan_in + fan_out))`.
pub fn glorot_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> DenseMatrix {
    assert!(fan_in >= 1 && fan_out >= 1, "fan sizes must be >= 1");
    let bound = glorot_bound(fan_in, fan_out);
    let values = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, values).expect("sized")
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: PropagationKind,
    /// Indices into [`Model::params`].
    pub weights: Vec<usize>,
    pub activation: Activation,
    pub dropout: bool,
    pub residual: bool,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub params: Vec<Parameter>,
}

/// Handles produced by one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Row-wise softmax of the last layer.
    pub probs: Var,
    /// Output of every layer after its activation (and residual add).
    pub layer_outputs: Vec<Var>,
    /// Weights of the first layer, the ones that are L2-regularized.
    pub first_layer_weights: Vec<Var>,
}

/// Assembles `hidden_dims.len() + 1` layers. Hidden layers use the configured
/// activation; the last layer is linear and followed by a softmax. Residual
/// connections are inserted only where a hidden layer maps a width onto itself.
pub fn build_model(config: &GcnConfig, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Model> {
    config.validate()?;
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::InvalidParameter("model dimensions must be >= 1".into()));
    }
    let mut dims = Vec::with_capacity(config.hidden_dims.len() + 2);
    dims.push(in_dim);
    dims.extend_from_slice(&config.hidden_dims);
    dims.push(out_dim);
    let depth = dims.len() - 1;

    let mut layers = Vec::with_capacity(depth);
    let mut params = Vec::new();
    let mut residual_junctions = 0;
    for l in 0..depth {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let last = l + 1 == depth;
        let kind = if last && config.linear_head {
            PropagationKind::Mlp
        } else {
            config.propagation
        };
        let residual = config.residual && l > 0 && !last && fan_in == fan_out;
        residual_junctions += usize::from(residual);
        let dropout = match config.dropout_placement {
            DropoutPlacement::AllLayers => true,
            DropoutPlacement::FirstAndLast => l == 0 || last,
        };
        let mut weights = Vec::with_capacity(kind.weight_count());
        for k in 0..kind.weight_count() {
            weights.push(params.len());
            params.push(Parameter::new(
                format!("layer{l}.theta{k}"),
                glorot_init(fan_in, fan_out, rng),
            ));
        }
        layers.push(Layer {
            kind,
            weights,
            activation: if last { Activation::Identity } else { config.activation },
            dropout,
            residual,
            in_dim: fan_in,
            out_dim: fan_out,
        });
    }
    if config.residual && residual_junctions == 0 && depth > 2 {
        warn!("residual connections requested but no hidden layer keeps its width; building without them");
    }
    Ok(Model { layers, params })
}

impl Model {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Records a full forward pass. Dropout is applied to layer inputs only
    /// when `training` is set.
    pub fn record_forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        ops: &'a PropagationOps,
        features: &'a Features,
        training: bool,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<ForwardVars> {
        if features.rows() != ops.n() {
            return Err(Error::DimensionMismatch {
                op: "forward",
                left: (features.rows(), features.cols()),
                right: (ops.n(), ops.n()),
            });
        }
        if features.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                op: "forward",
                left: (features.rows(), features.cols()),
                right: (self.in_dim(), self.out_dim()),
            });
        }
        let mut layer_outputs = Vec::with_capacity(self.depth());
        let mut first_layer_weights = Vec::new();
        let mut prev: Option<Var> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let drop = training && layer.dropout && dropout_p > 0.0;
            let (input, input_var) = match prev {
                None => (first_input(tape, features, drop, dropout_p, rng)?, None),
                Some(h) => {
                    let h_in = if drop { tape.dropout(h, dropout_p, true, rng)? } else { h };
                    (LayerInput::Dense(h_in), Some(h))
                }
            };
            let weights: Vec<Var> = layer
                .weights
                .iter()
                .map(|&k| tape.param(k, &self.params[k]))
                .collect();
            if l == 0 {
                first_layer_weights = weights.clone();
            }
            let pre = propagate_on_tape(tape, layer.kind, ops, input, &weights)?;
            let mut out = layer.activation.record(tape, pre);
            if layer.residual {
                let skip = input_var.expect("residual layers are never first");
                out = tape.add(out, skip)?;
            }
            layer_outputs.push(out);
            prev = Some(out);
        }
        let logits = prev.ok_or_else(|| Error::InvalidParameter("model has no layers".into()))?;
        let probs = tape.softmax_rows(logits)?;
        Ok(ForwardVars {
            probs,
            layer_outputs,
            first_layer_weights,
        })
    }

    /// Class probabilities; deterministic when `training` is false.
    pub fn predict(
        &self,
        ops: &PropagationOps,
        features: &Features,
        training: bool,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let vars = self.record_forward(&mut tape, ops, features, training, dropout_p, rng)?;
        Ok(tape.value(vars.probs).clone())
    }

    /// Output of every layer in evaluation mode (after activation).
    pub fn layer_outputs(&self, ops: &PropagationOps, features: &Features) -> Result<Vec<DenseMatrix>> {
        let mut tape = Tape::new();
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Dropout);
        let vars = self.record_forward(&mut tape, ops, features, false, 0.0, &mut rng)?;
        Ok(vars
            .layer_outputs
            .iter()
            .map(|&v| tape.value(v).clone())
            .collect())
    }
}

fn first_input<'a>(
    tape: &mut Tape<'a>,
    features: &'a Features,
    drop: bool,
    p: f64,
    rng: &mut Rng,
) -> Result<LayerInput<'a>> {
    Ok(match features {
        Features::Dense(x) => {
            let v = tape.input(x.clone());
            LayerInput::Dense(if drop { tape.dropout(v, p, true, rng)? } else { v })
        }
        Features::Sparse(x) => {
            if drop {
                LayerInput::Sparse(SparseArg::Shared(Rc::new(dropout_sparse(x, p, rng)?)))
            } else {
                LayerInput::Sparse(SparseArg::Borrowed(x))
            }
        }
        &Features::Identity(n) => LayerInput::Identity {
            n,
            scale: drop.then(|| dropout_mask(n, p, rng)),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn glorot_bound_for_equal_fans() {
        assert_eq!(glorot_bound(3, 3), 1.0);
        let mut rng = stream(0, Stream::Init);
        let w = glorot_init(3, 3, &mut rng);
        assert!(w.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn two_layer_architecture() {
        let mut rng = stream(0, Stream::Init);
        let m = build_model(&GcnConfig::default(), 10, 3, &mut rng).unwrap();
        assert_eq!(m.depth(), 2);
        assert_eq!(m.params.len(), 2);
        assert_eq!(m.params[0].value.shape(), (10, 16));
        assert_eq!(m.params[1].value.shape(), (16, 3));
        assert_eq!(m.layers[0].activation, Activation::Relu);
        assert_eq!(m.layers[1].activation, Activation::Identity);
        assert!(m.layers.iter().all(|l| l.kind == PropagationKind::RENORM && l.dropout));
    }

    #[test]
    fn karate_embedding_architecture() {
        let mut rng = stream(0, Stream::Init);
        let m = build_model(&GcnConfig::karate_embedding(300, 0), 34, 4, &mut rng).unwrap();
        let dims: Vec<_> = m.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect();
        assert_eq!(dims, vec![(34, 4), (4, 4), (4, 2), (2, 4)]);
        assert!(m.layers[..3]
            .iter()
            .all(|l| l.activation == Activation::Tanh && l.kind == PropagationKind::RENORM));
        assert_eq!(m.layers[3].kind, PropagationKind::Mlp);
    }

    #[test]
    fn deep_residual_architecture() {
        let mut rng = stream(0, Stream::Init);
        let m = build_model(&GcnConfig::depth_study(10, true, 0), 20, 5, &mut rng).unwrap();
        assert_eq!(m.depth(), 10);
        let residual: Vec<_> = m.layers.iter().map(|l| l.residual).collect();
        assert_eq!(
            residual,
            vec![false, true, true, true, true, true, true, true, true, false]
        );
        let drops: Vec<_> = m.layers.iter().map(|l| l.dropout).collect();
        assert_eq!(drops.iter().filter(|&&d| d).count(), 2);
        assert!(drops[0] && drops[9]);
    }

    #[test]
    fn residual_skipped_on_width_change() {
        let mut rng = stream(0, Stream::Init);
        let config = GcnConfig {
            hidden_dims: vec![8, 4, 2],
            residual: true,
            ..GcnConfig::default()
        };
        let m = build_model(&config, 6, 3, &mut rng).unwrap();
        assert!(m.layers.iter().all(|l| !l.residual));
    }

    #[test]
    fn multi_weight_variants_allocate_all_thetas() {
        let mut rng = stream(0, Stream::Init);
        let config = GcnConfig {
            propagation: PropagationKind::Chebyshev { order: 3 },
            ..GcnConfig::default()
        };
        let m = build_model(&config, 5, 2, &mut rng).unwrap();
        assert_eq!(m.layers[0].weights, vec![0, 1, 2, 3]);
        assert_eq!(m.layers[1].weights, vec![4, 5, 6, 7]);
    }

    #[test]
    fn config_validation() {
        let ok = GcnConfig::default();
        assert!(ok.validate().is_ok());
        assert!(GcnConfig { dropout_p: 1.0, ..ok.clone() }.validate().is_err());
        assert!(GcnConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(GcnConfig { hidden_dims: vec![0], ..ok.clone() }.validate().is_err());
        assert!(GcnConfig { early_stop_window: Some(0), ..ok }.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = GcnConfig {
            propagation: PropagationKind::Chebyshev { order: 2 },
            lambda_max: LambdaMax::Fixed(2.0),
            ..GcnConfig::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"propagation\":\"cheb:2\""));
        let back: GcnConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
