//! Full-batch training, evaluation, cross-validation and epoch benchmarking.

use std::time::Instant;

use log::debug;

use crate::autodiff::{Parameter, Tape};
use crate::data::{random_graph, Dataset, Masks};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::{build_model, GcnConfig, LossReduction, Model};
use crate::optim::{adam_step, AdamState};
use crate::propagation::PropagationOps;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    /// NaN when the dataset has no test nodes.
    pub test_accuracy: f64,
}

/// Fraction of `mask` whose argmax prediction (lowest class on ties) matches
/// the label.
pub fn accuracy(probs: &DenseMatrix, labels: &[Option<usize>], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut hits = 0usize;
    for &i in mask {
        if i >= probs.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: probs.rows(),
            });
        }
        if labels[i] == Some(probs.argmax_row(i)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / mask.len() as f64)
}

/// Accuracy of `model` on `mask` in evaluation mode.
pub fn evaluate(model: &Model, dataset: &Dataset, ops: &PropagationOps, mask: &[usize]) -> Result<f64> {
    let mut rng = stream(0, Stream::Dropout);
    let probs = model.predict(ops, &dataset.features, false, 0.0, &mut rng)?;
    accuracy(&probs, &dataset.labels, mask)
}

struct Objective {
    loss: f64,
    probs: DenseMatrix,
}

/// Cross-entropy over `mask` plus the L2 term, recorded on `tape`. Returns the
/// loss handle and the probability handle.
fn record_loss<'a>(
    tape: &mut Tape<'a>,
    model: &Model,
    ops: &'a PropagationOps,
    dataset: &'a Dataset,
    targets: &DenseMatrix,
    mask: &[usize],
    config: &GcnConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<(crate::autodiff::Var, crate::autodiff::Var)> {
    let vars = model.record_forward(tape, ops, &dataset.features, training, config.dropout_p, rng)?;
    let mut ce = tape.masked_cross_entropy(vars.probs, targets, mask)?;
    if config.loss_reduction == LossReduction::Mean {
        ce = tape.scale(1.0 / mask.len() as f64, ce);
    }
    let loss = if config.l2_factor > 0.0 {
        let l2 = tape.l2_penalty(&vars.first_layer_weights);
        let l2 = tape.scale(config.l2_factor, l2);
        tape.add(ce, l2)?
    } else {
        ce
    };
    Ok((loss, vars.probs))
}

/// The training objective (cross-entropy on `mask` plus the L2 term) at the
/// model's current weights. Dropout is active when `training` is set.
pub fn objective(
    model: &Model,
    dataset: &Dataset,
    ops: &PropagationOps,
    config: &GcnConfig,
    mask: &[usize],
    training: bool,
    rng: &mut Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (loss, _) = record_loss(&mut tape, model, ops, dataset, &dataset.targets(), mask, config, training, rng)?;
    Ok(tape.scalar(loss))
}

/// Like [`objective`], and also overwrites every parameter gradient.
pub fn objective_with_gradients(
    model: &mut Model,
    dataset: &Dataset,
    ops: &PropagationOps,
    config: &GcnConfig,
    mask: &[usize],
    training: bool,
    rng: &mut Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (loss, _) = record_loss(&mut tape, model, ops, dataset, &dataset.targets(), mask, config, training, rng)?;
    tape.backward(loss, &mut model.params)?;
    Ok(tape.scalar(loss))
}

fn eval_objective(
    model: &Model,
    ops: &PropagationOps,
    dataset: &Dataset,
    targets: &DenseMatrix,
    mask: &[usize],
    config: &GcnConfig,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let mut rng = stream(0, Stream::Dropout);
    let (loss, probs) = record_loss(&mut tape, model, ops, dataset, targets, mask, config, false, &mut rng)?;
    Ok(Objective {
        loss: tape.scalar(loss),
        probs: tape.value(probs).clone(),
    })
}

/// Trains a fresh model on `dataset`. See [`train_with`] for the callback form.
pub fn train(dataset: &Dataset, config: &GcnConfig) -> Result<(Model, TrainReport)> {
    train_with(dataset, config, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch(epoch, model)` after every update.
pub fn train_with<F>(dataset: &Dataset, config: &GcnConfig, mut on_epoch: F) -> Result<(Model, TrainReport)>
where
    F: FnMut(usize, &Model) -> Result<()>,
{
    config.validate()?;
    dataset.validate()?;
    let masks = &dataset.masks;
    if masks.train.is_empty() {
        return Err(Error::EmptyMask);
    }
    if config.early_stop_window.is_some() && masks.val.is_empty() {
        return Err(Error::InvalidParameter(
            "early stopping needs a nonempty validation mask".into(),
        ));
    }
    let ops = PropagationOps::build(&dataset.graph, config.propagation, config.lambda_max)?;
    let mut init_rng = stream(config.seed, Stream::Init);
    let mut model = build_model(config, dataset.features.cols(), dataset.class_count, &mut init_rng)?;
    let mut adam = AdamState::new(&model.params);
    let mut dropout_rng = stream(config.seed, Stream::Dropout);
    let targets = dataset.targets();

    let mut records = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let mut best_params: Option<Vec<Parameter>> = None;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let train_loss = {
            let mut tape = Tape::new();
            let (loss, _) = record_loss(
                &mut tape,
                &model,
                &ops,
                dataset,
                &targets,
                &masks.train,
                config,
                true,
                &mut dropout_rng,
            )?;
            tape.backward(loss, &mut model.params)?;
            tape.scalar(loss)
        };
        adam_step(&mut model.params, &mut adam, config.learning_rate)?;
        let (val_loss, val_accuracy) = if masks.val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let obj = eval_objective(&model, &ops, dataset, &targets, &masks.val, config)?;
            (obj.loss, accuracy(&obj.probs, &dataset.labels, &masks.val)?)
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            wall_ms,
        });
        on_epoch(epoch, &model)?;

        if val_loss < best_val {
            best_val = val_loss;
            since_best = 0;
            if config.restore_best {
                best_params = Some(model.params.clone());
            }
        } else {
            since_best += 1;
        }
        if let Some(window) = config.early_stop_window {
            if since_best >= window {
                debug!("early stop at epoch {epoch}, best validation loss {best_val}");
                break;
            }
        }
    }
    if let Some(best) = best_params {
        model.params = best;
    }
    let test_accuracy = if masks.test.is_empty() {
        f64::NAN
    } else {
        evaluate(&model, dataset, &ops, &masks.test)?
    };
    Ok((
        model,
        TrainReport {
            stopped_epoch: records.len(),
            records,
            test_accuracy,
        },
    ))
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Assigns every labeled node to one of `folds` folds, class by class, so
/// that each class is spread as evenly as its size allows.
pub fn stratified_folds(labels: &[Option<usize>], class_count: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = stream(seed, Stream::Folds);
    let mut by_class = vec![Vec::new(); class_count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = *l {
            by_class[c].push(i);
        }
    }
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub train_accuracies: Vec<f64>,
    pub test_accuracies: Vec<f64>,
}

impl CrossValidation {
    pub fn train_mean_stderr(&self) -> (f64, f64) {
        mean_stderr(&self.train_accuracies)
    }

    pub fn test_mean_stderr(&self) -> (f64, f64) {
        mean_stderr(&self.test_accuracies)
    }
}

/// Trains once per fold on the other folds' labels and scores the held-out
/// fold. Validation is not used, so early stopping is switched off.
pub fn cross_validate(dataset: &Dataset, folds: usize, config: &GcnConfig) -> Result<CrossValidation> {
    let parts = stratified_folds(&dataset.labels, dataset.class_count, folds, config.seed)?;
    let config = GcnConfig {
        early_stop_window: None,
        restore_best: false,
        ..config.clone()
    };
    let mut result = CrossValidation {
        train_accuracies: Vec::with_capacity(folds),
        test_accuracies: Vec::with_capacity(folds),
    };
    for k in 0..folds {
        let train_nodes: Vec<usize> = {
            let mut t: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            t.sort_unstable();
            t
        };
        let fold = dataset.with_masks(Masks {
            train: train_nodes,
            val: Vec::new(),
            test: parts[k].clone(),
        })?;
        let (model, report) = train(&fold, &config)?;
        let ops = PropagationOps::build(&fold.graph, config.propagation, config.lambda_max)?;
        result
            .train_accuracies
            .push(evaluate(&model, &fold, &ops, &fold.masks.train)?);
        result.test_accuracies.push(report.test_accuracy);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub n: usize,
    pub epochs: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Rough peak bytes for one epoch on the featureless random graph.
fn bench_footprint(n: usize, config: &GcnConfig) -> u128 {
    let width = config.hidden_dims.iter().copied().max().unwrap_or(1).max(1) as u128;
    let n = n as u128;
    let weights = config.propagation.weight_count().max(1) as u128;
    // first-layer weights with Adam state and gradients, tape activations,
    // and the sparse operator (~4n + n entries of 16 bytes)
    let dense = n * width * 8 * (4 * weights + 8);
    let sparse = 5 * n * 16 * 2;
    dense + sparse
}

fn available_memory() -> Option<u128> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u128 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Times `epochs` full training epochs (forward, loss, backward, Adam) on
/// [`random_graph`]`(n)`. Graph construction is not timed.
pub fn benchmark_epoch(n: usize, config: &GcnConfig, epochs: usize) -> Result<BenchResult> {
    if epochs == 0 {
        return Err(Error::InvalidParameter("need at least one epoch".into()));
    }
    let need = bench_footprint(n, config);
    if let Some(avail) = available_memory() {
        if need > avail {
            return Err(Error::OutOfMemory {
                what: format!("epoch on a {n}-node random graph"),
                bytes: need,
            });
        }
    }
    let dataset = random_graph(n, config.seed)?;
    let ops = PropagationOps::build(&dataset.graph, config.propagation, config.lambda_max)?;
    let mut init_rng = stream(config.seed, Stream::Init);
    let mut model = build_model(config, n, dataset.class_count, &mut init_rng)?;
    let mut adam = AdamState::new(&model.params);
    let mut rng = stream(config.seed, Stream::Dropout);
    let targets = dataset.targets();
    let mut times = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let start = Instant::now();
        let mut tape = Tape::new();
        let (loss, _) = record_loss(
            &mut tape,
            &model,
            &ops,
            &dataset,
            &targets,
            &dataset.masks.train,
            config,
            true,
            &mut rng,
        )?;
        tape.backward(loss, &mut model.params)?;
        adam_step(&mut model.params, &mut adam, config.learning_rate)?;
        drop(tape);
        times.push(start.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / epochs as f64;
    let std = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / epochs as f64).sqrt();
    Ok(BenchResult {
        n,
        epochs,
        mean_s: mean,
        std_s: std,
    })
}
