//! The `gcn` command line: argument parsing, config resolution and the
//! subcommand drivers. The binary is a thin wrapper around [`run`].

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{karate_club, load_bundle, random_graph, random_split, Dataset};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::metrics::{fmt_f64, write_stream};
use crate::model::{build_model, Activation, GcnConfig, LossReduction, Model};
use crate::propagation::{LambdaMax, PropagationKind, PropagationOps};
use crate::rng::{stream, Stream};
use crate::train::{benchmark_epoch, cross_validate, evaluate, mean_stderr, train, train_with, TrainReport};
use crate::wl::{wl1_refine, Coloring};

#[derive(Debug, Parser)]
#[command(name = "gcn", version, about = "Graph convolutional networks for node classification")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Load and check `--dataset`, print its counts as JSON and exit.
    #[arg(long)]
    pub validate: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Bundle directory, `karate`, or `random:<n>`.
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    /// JSON file with the same field names as these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (or directory for `embed --train-iters`); stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub repeat: Option<usize>,
    /// Explicit seed list; defaults to `seed, seed+1, …`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// `renorm[:λ]`, `cheb:K`, `first-order`, `single`, `first-term` or `mlp`.
    #[arg(long, global = true)]
    pub prop: Option<PropagationKind>,
    /// Hidden widths, comma separated; empty for a single layer.
    #[arg(long, global = true, value_delimiter = ',', num_args = 0..)]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub l2: Option<f64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Early stopping window, or `off`.
    #[arg(long, global = true)]
    pub early_stop: Option<EarlyStop>,
    /// `auto` (Lanczos estimate) or a fixed value such as 2.
    #[arg(long, global = true)]
    pub lambda_max: Option<LambdaMax>,
    #[arg(long, global = true)]
    pub restore_best: bool,
    #[arg(long, global = true)]
    pub residual: bool,
    /// `sum` or `mean` reduction of the labeled cross-entropy.
    #[arg(long, global = true)]
    pub loss_reduction: Option<LossReductionArg>,
    /// `relu` or `tanh` for hidden layers.
    #[arg(long, global = true)]
    pub activation: Option<ActivationArg>,
    /// Put a dense softmax classifier on top of the graph layers.
    #[arg(long, global = true)]
    pub linear_head: bool,
    /// Skip row normalization of bundle features.
    #[arg(long, global = true)]
    pub raw_features: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and report per-epoch metrics and test accuracy.
    Train {
        /// Draw 20 labels per class, 500 validation and 1000 test nodes per seed.
        #[arg(long)]
        random_split: bool,
        /// Write real per-epoch wall times instead of zeros.
        #[arg(long)]
        timing: bool,
        /// Save the trained weights (one file per seed when repeating).
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Score saved weights on the dataset's masks.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Time training epochs on random graphs.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        bench_epochs: usize,
    },
    /// Write 2-d node embeddings of the tanh model.
    Embed {
        /// Training checkpoints; without this the untrained embedding is written.
        #[arg(long, value_delimiter = ',')]
        train_iters: Option<Vec<usize>>,
    },
    /// Run color refinement and print the stable partition.
    WlColors {
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Cross-validated accuracy for depths 1 to `max-depth`, with and without residuals.
    DepthStudy {
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 10)]
        max_depth: usize,
    },
    /// Train every propagation variant and tabulate mean test accuracy.
    PropCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Off,
    Window(usize),
}

impl std::str::FromStr for EarlyStop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "none" => Ok(Self::Off),
            _ => s
                .parse()
                .ok()
                .filter(|&w| w > 0)
                .map(Self::Window)
                .ok_or_else(|| Error::InvalidParameter(format!("bad early-stop `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivationArg(pub Activation);

impl std::str::FromStr for ActivationArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self(Activation::Relu)),
            "tanh" => Ok(Self(Activation::Tanh)),
            _ => Err(Error::InvalidParameter(format!("bad activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossReductionArg(pub LossReduction);

impl std::str::FromStr for LossReductionArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self(LossReduction::Sum)),
            "mean" => Ok(Self(LossReduction::Mean)),
            _ => Err(Error::InvalidParameter(format!("bad loss reduction `{s}`"))),
        }
    }
}

/// A number or a keyword string inside the JSON config.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

impl NumOrWord {
    fn text(&self) -> String {
        match self {
            Self::Num(v) => v.to_string(),
            Self::Word(s) => s.clone(),
        }
    }
}

/// The JSON config file; every field mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    repeat: Option<usize>,
    seeds: Option<Vec<u64>>,
    prop: Option<String>,
    hidden: Option<Vec<usize>>,
    dropout: Option<f64>,
    l2: Option<f64>,
    lr: Option<f64>,
    epochs: Option<usize>,
    #[serde(alias = "early-stop")]
    early_stop: Option<NumOrWord>,
    #[serde(alias = "lambda-max")]
    lambda_max: Option<NumOrWord>,
    #[serde(alias = "restore-best")]
    restore_best: Option<bool>,
    residual: Option<bool>,
    #[serde(alias = "loss-reduction")]
    loss_reduction: Option<String>,
    activation: Option<String>,
    #[serde(alias = "linear-head")]
    linear_head: Option<bool>,
    #[serde(alias = "raw-features")]
    raw_features: Option<bool>,
}

/// Flags after merging the config file underneath the command line.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub dataset: Option<String>,
    pub out: Option<PathBuf>,
    pub config: GcnConfig,
    pub seeds: Vec<u64>,
    pub raw_features: bool,
}

impl RunSpec {
    /// Resolves flags over an optional config file over `base`.
    pub fn resolve(args: &CommonArgs, base: GcnConfig) -> Result<Self> {
        let file: ConfigFile = match &args.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?,
            None => ConfigFile::default(),
        };
        let mut c = base;
        let prop = match (&args.prop, &file.prop) {
            (Some(p), _) => Some(*p),
            (None, Some(s)) => Some(s.parse()?),
            _ => None,
        };
        if let Some(p) = prop {
            c.propagation = p;
        }
        if let Some(h) = args.hidden.clone().or(file.hidden) {
            c.hidden_dims = h;
        }
        if let Some(v) = args.dropout.or(file.dropout) {
            c.dropout_p = v;
        }
        if let Some(v) = args.l2.or(file.l2) {
            c.l2_factor = v;
        }
        if let Some(v) = args.lr.or(file.lr) {
            c.learning_rate = v;
        }
        if let Some(v) = args.epochs.or(file.epochs) {
            c.max_epochs = v;
        }
        let early = match (args.early_stop, &file.early_stop) {
            (Some(e), _) => Some(e),
            (None, Some(v)) => Some(v.text().parse()?),
            _ => None,
        };
        match early {
            Some(EarlyStop::Off) => c.early_stop_window = None,
            Some(EarlyStop::Window(w)) => c.early_stop_window = Some(w),
            None => {}
        }
        let lambda = match (args.lambda_max, &file.lambda_max) {
            (Some(l), _) => Some(l),
            (None, Some(v)) => Some(v.text().parse()?),
            _ => None,
        };
        if let Some(l) = lambda {
            c.lambda_max = l;
        }
        c.restore_best |= args.restore_best || file.restore_best.unwrap_or(false);
        c.residual |= args.residual || file.residual.unwrap_or(false);
        let reduction = match (args.loss_reduction, &file.loss_reduction) {
            (Some(r), _) => Some(r),
            (None, Some(s)) => Some(s.parse()?),
            _ => None,
        };
        if let Some(LossReductionArg(r)) = reduction {
            c.loss_reduction = r;
        }
        let activation = match (args.activation, &file.activation) {
            (Some(a), _) => Some(a),
            (None, Some(s)) => Some(s.parse()?),
            _ => None,
        };
        if let Some(ActivationArg(a)) = activation {
            c.activation = a;
        }
        c.linear_head |= args.linear_head || file.linear_head.unwrap_or(false);
        let seed = args.seed.or(file.seed).unwrap_or(0);
        c.seed = seed;
        let seeds = args.seeds.clone().or(file.seeds);
        let repeat = args.repeat.or(file.repeat);
        let seeds = match (seeds, repeat) {
            (Some(list), Some(r)) if list.len() != r => {
                return Err(Error::InvalidParameter(format!(
                    "{} seeds listed for --repeat {r}",
                    list.len()
                )))
            }
            (Some(list), _) if list.is_empty() => {
                return Err(Error::InvalidParameter("empty seed list".into()))
            }
            (Some(list), _) => list,
            (None, Some(0)) => return Err(Error::InvalidParameter("--repeat must be >= 1".into())),
            (None, r) => (0..r.unwrap_or(1) as u64).map(|i| seed + i).collect(),
        };
        c.validate()?;
        Ok(Self {
            dataset: args.dataset.clone().or(file.dataset),
            out: args.out.clone().or(file.out),
            config: c,
            seeds,
            raw_features: args.raw_features || file.raw_features.unwrap_or(false),
        })
    }

    pub fn config_for(&self, seed: u64) -> GcnConfig {
        GcnConfig {
            seed,
            ..self.config.clone()
        }
    }

    /// Loads the dataset named by `--dataset`, row-normalizing features
    /// unless `--raw-features` was given.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let name = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("--dataset is required".into()))?;
        let ds = open_dataset(name, self.config.seed)?;
        Ok(if self.raw_features {
            ds
        } else {
            Dataset {
                features: ds.features.row_normalized(),
                ..ds
            }
        })
    }
}

/// `karate`, `random:<n>` or a bundle directory.
pub fn open_dataset(name: &str, seed: u64) -> Result<Dataset> {
    if name == "karate" {
        return Ok(karate_club());
    }
    if let Some(n) = name.strip_prefix("random:") {
        let n = n
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad node count in `{name}`")))?;
        return random_graph(n, seed);
    }
    load_bundle(Path::new(name))
}

/// Weights plus the configuration that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub config: GcnConfig,
    pub in_dim: usize,
    pub out_dim: usize,
    pub params: Vec<SavedParam>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SavedModel {
    pub fn from_model(model: &Model, config: &GcnConfig) -> Self {
        Self {
            config: config.clone(),
            in_dim: model.in_dim(),
            out_dim: model.out_dim(),
            params: model
                .params
                .iter()
                .map(|p| SavedParam {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let mut rng = stream(self.config.seed, Stream::Init);
        let mut model = build_model(&self.config, self.in_dim, self.out_dim, &mut rng)?;
        if model.params.len() != self.params.len() {
            return Err(Error::InvalidParameter(format!(
                "saved model has {} weight matrices, architecture needs {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for (p, s) in model.params.iter_mut().zip(self.params) {
            if p.value.shape() != (s.rows, s.cols) {
                return Err(Error::DimensionMismatch {
                    op: "load model",
                    left: p.value.shape(),
                    right: (s.rows, s.cols),
                });
            }
            p.value = DenseMatrix::from_vec(s.rows, s.cols, s.values)?;
        }
        Ok(model)
    }
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// dataset problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_dataset_error() {
        3
    } else {
        match e {
            Error::InvalidParameter(_) | Error::EmptyMask | Error::MissingOperator(_) => 2,
            _ => 1,
        }
    }
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(io::BufWriter::new(fs::File::create(p)?))
        }
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn opt_json(x: f64) -> String {
    fmt_f64(x)
}

/// Parses `argv` and runs the chosen subcommand.
pub fn run(cli: Cli) -> Result<()> {
    if cli.validate {
        return cmd_validate(&cli.common);
    }
    let Some(command) = &cli.command else {
        return Err(Error::InvalidParameter("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Train {
            random_split: rs,
            timing,
            save_model,
        } => cmd_train(&cli.common, *rs, *timing, save_model.as_deref()),
        Command::Eval { model } => cmd_eval(&cli.common, model),
        Command::Bench { nodes, bench_epochs } => cmd_bench(&cli.common, nodes, *bench_epochs),
        Command::Embed { train_iters } => cmd_embed(&cli.common, train_iters.as_deref()),
        Command::WlColors { rounds } => cmd_wl_colors(&cli.common, *rounds),
        Command::DepthStudy { folds, max_depth } => cmd_depth_study(&cli.common, *folds, *max_depth),
        Command::PropCompare => cmd_prop_compare(&cli.common),
    }
}

/// Bundle counts printed by `--validate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub n: usize,
    pub edges: usize,
    pub feature_dim: usize,
    pub class_count: usize,
    pub labeled: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub isolated: usize,
}

impl BundleSummary {
    pub fn of(ds: &Dataset) -> Self {
        Self {
            n: ds.n(),
            edges: ds.graph.undirected_edge_count(),
            feature_dim: ds.features.cols(),
            class_count: ds.class_count,
            labeled: ds.labeled_nodes().len(),
            train: ds.masks.train.len(),
            val: ds.masks.val.len(),
            test: ds.masks.test.len(),
            isolated: (0..ds.n()).filter(|&i| ds.graph.degree(i) == 0).count(),
        }
    }
}

fn cmd_validate(args: &CommonArgs) -> Result<()> {
    let spec = RunSpec::resolve(args, GcnConfig::default())?;
    let ds = RunSpec {
        raw_features: true,
        ..spec.clone()
    }
    .load_dataset()?;
    let mut out = output(spec.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string(&BundleSummary::of(&ds))?)?;
    out.flush()?;
    Ok(())
}

/// Runs one training per seed in parallel and returns the reports in seed order.
pub fn train_seeds(
    dataset: &Dataset,
    spec: &RunSpec,
    random_splits: bool,
) -> Result<Vec<(u64, Model, TrainReport)>> {
    spec.seeds
        .par_iter()
        .map(|&seed| {
            let config = spec.config_for(seed);
            let ds = if random_splits {
                let masks = random_split(&dataset.labels, dataset.class_count, 20, 500, 1000, seed)?;
                dataset.with_masks(masks)?
            } else {
                dataset.clone()
            };
            let (model, report) = train(&ds, &config)?;
            Ok((seed, model, report))
        })
        .collect()
}

fn cmd_train(args: &CommonArgs, random_splits: bool, timing: bool, save: Option<&Path>) -> Result<()> {
    let spec = RunSpec::resolve(args, GcnConfig::default())?;
    let dataset = spec.load_dataset()?;
    let runs = train_seeds(&dataset, &spec, random_splits)?;
    let mut out = output(spec.out.as_deref())?;
    let mut accs = Vec::with_capacity(runs.len());
    for (seed, model, report) in &runs {
        write_stream(&mut out, report, *seed, timing)?;
        accs.push(report.test_accuracy);
        if let Some(path) = save {
            let path = if runs.len() > 1 {
                path.with_extension(format!("seed{seed}.json"))
            } else {
                path.to_path_buf()
            };
            let saved = SavedModel::from_model(model, &spec.config_for(*seed));
            fs::write(path, serde_json::to_string(&saved)? + "\n")?;
        }
    }
    let (mean, stderr) = mean_stderr(&accs);
    writeln!(
        out,
        "{{\"mean_test_acc\":{},\"stderr\":{}}}",
        opt_json(mean),
        opt_json(stderr)
    )?;
    out.flush()?;
    Ok(())
}

fn cmd_eval(args: &CommonArgs, model_path: &Path) -> Result<()> {
    let saved: SavedModel = serde_json::from_str(&fs::read_to_string(model_path)?)?;
    let spec = RunSpec::resolve(args, saved.config.clone())?;
    let dataset = spec.load_dataset()?;
    let config = saved.config.clone();
    let model = saved.into_model()?;
    let ops = PropagationOps::build(&dataset.graph, config.propagation, config.lambda_max)?;
    let score = |mask: &[usize]| -> Result<f64> {
        if mask.is_empty() {
            Ok(f64::NAN)
        } else {
            evaluate(&model, &dataset, &ops, mask)
        }
    };
    let mut out = output(spec.out.as_deref())?;
    writeln!(
        out,
        "{{\"train_acc\":{},\"val_acc\":{},\"test_acc\":{}}}",
        opt_json(score(&dataset.masks.train)?),
        opt_json(score(&dataset.masks.val)?),
        opt_json(score(&dataset.masks.test)?)
    )?;
    out.flush()?;
    Ok(())
}

fn cmd_bench(args: &CommonArgs, nodes: &[usize], epochs: usize) -> Result<()> {
    let base = GcnConfig {
        early_stop_window: None,
        ..GcnConfig::default()
    };
    let spec = RunSpec::resolve(args, base)?;
    if nodes.is_empty() || nodes.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParameter("node counts must be >= 2".into()));
    }
    let mut out = output(spec.out.as_deref())?;
    writeln!(out, "n,mean_s_per_epoch,std,status")?;
    for &n in nodes {
        match benchmark_epoch(n, &spec.config, epochs) {
            Ok(r) => writeln!(out, "{n},{},{},ok", fmt_f64(r.mean_s), fmt_f64(r.std_s))?,
            Err(Error::OutOfMemory { what, bytes }) => {
                warn!("{what} needs about {bytes} bytes; skipped");
                writeln!(out, "{n},,,oom")?;
            }
            Err(e) => return Err(e),
        }
        out.flush()?;
    }
    Ok(())
}

/// Index of the layer whose output is the 2-d embedding.
fn embedding_layer(model: &Model) -> usize {
    model.depth().saturating_sub(2)
}

fn write_embedding(out: &mut dyn Write, emb: &DenseMatrix, labels: &[Option<usize>]) -> Result<()> {
    let header: Vec<String> = (0..emb.cols()).map(|k| format!("dim{k}")).collect();
    writeln!(out, "node,{},label", header.join(","))?;
    for i in 0..emb.rows() {
        let dims: Vec<String> = emb.row(i).iter().map(|&v| fmt_f64(v)).collect();
        let label = labels[i].map(|c| c.to_string()).unwrap_or_default();
        writeln!(out, "{i},{},{label}", dims.join(","))?;
    }
    Ok(())
}

fn cmd_embed(args: &CommonArgs, iters: Option<&[usize]>) -> Result<()> {
    let base = GcnConfig::karate_embedding(300, 0);
    let mut spec = RunSpec::resolve(args, base)?;
    if spec.dataset.is_none() {
        spec.dataset = Some("karate".into());
    }
    let dataset = spec.load_dataset()?;
    let config = spec.config.clone();
    let ops = PropagationOps::build(&dataset.graph, config.propagation, config.lambda_max)?;
    match iters {
        None => {
            let mut rng = stream(config.seed, Stream::Init);
            let model = build_model(&config, dataset.features.cols(), dataset.class_count.max(1), &mut rng)?;
            let outputs = model.layer_outputs(&ops, &dataset.features)?;
            let mut out = output(spec.out.as_deref())?;
            write_embedding(&mut *out, &outputs[embedding_layer(&model)], &dataset.labels)?;
            out.flush()?;
        }
        Some(checkpoints) => {
            let dir = spec.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            let last = checkpoints.iter().copied().max().unwrap_or(0);
            let config = GcnConfig {
                max_epochs: last,
                early_stop_window: None,
                ..config
            };
            train_with(&dataset, &config, |epoch, model| {
                if checkpoints.contains(&epoch) {
                    let outputs = model.layer_outputs(&ops, &dataset.features)?;
                    let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("embedding_iter{epoch}.csv")))?);
                    write_embedding(&mut f, &outputs[embedding_layer(model)], &dataset.labels)?;
                    f.flush()?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn cmd_wl_colors(args: &CommonArgs, rounds: Option<usize>) -> Result<()> {
    let spec = RunSpec::resolve(args, GcnConfig::default())?;
    let dataset = spec.load_dataset()?;
    let g = &dataset.graph;
    let history = wl1_refine(g, &Coloring::uniform(g.n()), rounds.unwrap_or(g.n().max(1)))?;
    let mut out = output(spec.out.as_deref())?;
    for c in &history {
        writeln!(out, "# round {}\t{} colors", c.round, c.distinct())?;
    }
    let last = history.last().expect("history holds the initial coloring");
    for (i, c) in last.colors.iter().enumerate() {
        writeln!(out, "{i}\t{c}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_depth_study(args: &CommonArgs, folds: usize, max_depth: usize) -> Result<()> {
    let spec = RunSpec::resolve(args, GcnConfig::depth_study(2, false, 0))?;
    let dataset = spec.load_dataset()?;
    let mut cells = Vec::new();
    for depth in 1..=max_depth {
        for residual in [false, true] {
            cells.push((depth, residual));
        }
    }
    let rows: Vec<(usize, bool, f64, f64, f64)> = cells
        .par_iter()
        .map(|&(depth, residual)| {
            let mut train_accs = Vec::new();
            let mut test_accs = Vec::new();
            for &seed in &spec.seeds {
                let config = GcnConfig {
                    hidden_dims: vec![spec.config.hidden_dims.first().copied().unwrap_or(16); depth - 1],
                    residual,
                    seed,
                    ..spec.config.clone()
                };
                let cv = cross_validate(&dataset, folds, &config)?;
                train_accs.extend(cv.train_accuracies);
                test_accs.extend(cv.test_accuracies);
            }
            let (train_mean, _) = mean_stderr(&train_accs);
            let (test_mean, test_err) = mean_stderr(&test_accs);
            Ok((depth, residual, train_mean, test_mean, test_err))
        })
        .collect::<Result<_>>()?;
    let mut out = output(spec.out.as_deref())?;
    writeln!(out, "depth,residual,mean_train_acc,mean_test_acc,stderr")?;
    for (depth, residual, tr, te, err) in rows {
        writeln!(out, "{depth},{residual},{},{},{}", fmt_f64(tr), fmt_f64(te), fmt_f64(err))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_prop_compare(args: &CommonArgs) -> Result<()> {
    let spec = RunSpec::resolve(args, GcnConfig::default())?;
    let dataset = spec.load_dataset()?;
    let mut out = output(spec.out.as_deref())?;
    writeln!(out, "propagation,mean_test_acc,stderr,runs")?;
    for kind in PropagationKind::comparison_set() {
        let spec = RunSpec {
            config: GcnConfig {
                propagation: kind,
                ..spec.config.clone()
            },
            ..spec.clone()
        };
        let runs = train_seeds(&dataset, &spec, false)?;
        let accs: Vec<f64> = runs.iter().map(|r| r.2.test_accuracy).collect();
        let (mean, err) = mean_stderr(&accs);
        writeln!(out, "{kind},{},{},{}", fmt_f64(mean), fmt_f64(err), accs.len())?;
        out.flush()?;
    }
    Ok(())
}
