//! Datasets: the on-disk bundle format, splits, feature normalization, the
//! random benchmark graph and the karate club.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{format_edge_list, parse_edge_list, SparseGraph};
use crate::metrics::fmt_f64;
use crate::rng::{stream, Stream};
use crate::sparse::CsrMatrix;

pub const FORMAT_VERSION: u32 = 1;

/// Node feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
    /// `X = I_n`, never materialized.
    Identity(usize),
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Self::Dense(x) => x.rows(),
            Self::Sparse(x) => x.rows(),
            Self::Identity(n) => *n,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Dense(x) => x.cols(),
            Self::Sparse(x) => x.cols(),
            Self::Identity(n) => *n,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Dense(x) => x.clone(),
            Self::Sparse(x) => x.to_dense(),
            &Self::Identity(n) => DenseMatrix::identity(n),
        }
    }

    /// Scales every nonzero row to sum to one. Identity rows already do.
    pub fn row_normalized(&self) -> Self {
        match self {
            Self::Dense(x) => Self::Dense(row_normalize_dense(x)),
            Self::Sparse(x) => Self::Sparse(row_normalize(x)),
            Self::Identity(n) => Self::Identity(*n),
        }
    }

    /// Applies `perm` to the rows: row `i` moves to row `perm[i]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Self {
        match self {
            Self::Dense(x) => {
                let mut out = DenseMatrix::zeros(x.rows(), x.cols());
                for (i, &p) in perm.iter().enumerate() {
                    out.row_mut(p).copy_from_slice(x.row(i));
                }
                Self::Dense(out)
            }
            Self::Sparse(x) => {
                let triplets: Vec<_> = x.triplets().map(|(i, j, v)| (perm[i], j, v)).collect();
                Self::Sparse(
                    CsrMatrix::from_triplets(x.rows(), x.cols(), triplets, |a, _| a)
                        .expect("permutation keeps indices in range"),
                )
            }
            Self::Identity(n) => Self::Dense(
                Self::Identity(*n).to_dense().select_rows(&invert(perm)),
            ),
        }
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Row-normalizes a sparse nonnegative matrix; all-zero rows stay zero.
pub fn row_normalize(x: &CsrMatrix) -> CsrMatrix {
    let scale: Vec<f64> = (0..x.rows())
        .map(|i| {
            let s = x.row_sum(i);
            if s == 0.0 {
                0.0
            } else {
                1.0 / s
            }
        })
        .collect();
    x.scale_rows(&scale)
}

pub fn row_normalize_dense(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let s: f64 = row.iter().sum();
        if s != 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Masks {
    pub fn check(&self, n: usize, labels: &[Option<usize>]) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, mask) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in mask {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                if seen[i] {
                    return Err(Error::ManifestMismatch(format!(
                        "node {i} appears twice across the splits (second time in {name})"
                    )));
                }
                seen[i] = true;
                if labels[i].is_none() {
                    return Err(Error::ManifestMismatch(format!(
                        "{name} node {i} has no label"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: Features,
    pub labels: Vec<Option<usize>>,
    pub class_count: usize,
    pub masks: Masks,
    pub class_names: Option<Vec<String>>,
    pub directed_source: bool,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.features.rows() != n {
            return Err(Error::ManifestMismatch(format!(
                "{} feature rows for {n} nodes",
                self.features.rows()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::ManifestMismatch(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        if let Some(&c) = self.labels.iter().flatten().find(|&&c| c >= self.class_count) {
            return Err(Error::IndexOutOfRange {
                index: c,
                n: self.class_count,
            });
        }
        self.masks.check(n, &self.labels)
    }

    /// One-hot label matrix; unlabeled rows are zero.
    pub fn targets(&self) -> DenseMatrix {
        let mut y = DenseMatrix::zeros(self.n(), self.class_count.max(1));
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = *l {
                y[(i, c)] = 1.0;
            }
        }
        y
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn with_masks(&self, masks: Masks) -> Result<Self> {
        masks.check(self.n(), &self.labels)?;
        Ok(Self {
            masks,
            ..self.clone()
        })
    }

    /// Relabels node `i` as `perm[i]` consistently across graph, features,
    /// labels and masks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let graph = self.graph.permuted(perm)?;
        let mut labels = vec![None; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i];
        }
        let map = |m: &[usize]| m.iter().map(|&i| perm[i]).collect::<Vec<_>>();
        Ok(Self {
            graph,
            features: self.features.permuted_rows(perm),
            labels,
            class_count: self.class_count,
            masks: Masks {
                train: map(&self.masks.train),
                val: map(&self.masks.val),
                test: map(&self.masks.test),
            },
            class_names: self.class_names.clone(),
            directed_source: self.directed_source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub n: usize,
    pub feature_dim: usize,
    pub class_count: usize,
    pub directed_source: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub identity_features: bool,
}

fn read_required(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    Ok(fs::read_to_string(&path)?)
}

/// Data lines of a TSV file with their 1-based line numbers, split on tabs.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((k + 1, line.split('\t').collect()))
        }
    })
}

fn parse_field<T: std::str::FromStr>(s: &str, origin: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: origin.to_string(),
        line,
        msg: format!("bad {what} `{s}`"),
    })
}

/// Reads a bundle directory and checks it against its manifest.
pub fn load_bundle(dir: &Path) -> Result<Dataset> {
    let manifest: BundleManifest = serde_json::from_str(&read_required(dir, "manifest.json")?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::ManifestMismatch(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let n = manifest.n;

    let edges_origin = dir.join("edges.tsv").display().to_string();
    let edges = parse_edge_list(&read_required(dir, "edges.tsv")?, &edges_origin)?;
    let graph = SparseGraph::from_edge_list(&edges, n, true)?;

    let features_path = dir.join("features.tsv");
    let features = if manifest.identity_features {
        if manifest.feature_dim != n {
            return Err(Error::ManifestMismatch(format!(
                "identity features need feature_dim == n, got {} and {n}",
                manifest.feature_dim
            )));
        }
        Features::Identity(n)
    } else {
        let text = read_required(dir, "features.tsv")?;
        let origin = features_path.display().to_string();
        let mut triplets = Vec::new();
        for (line, f) in tsv_rows(&text) {
            if f.len() != 3 {
                return Err(Error::Parse {
                    path: origin.clone(),
                    line,
                    msg: format!("expected 3 fields, found {}", f.len()),
                });
            }
            let i: usize = parse_field(f[0], &origin, line, "node")?;
            let j: usize = parse_field(f[1], &origin, line, "feature")?;
            let v: f64 = parse_field(f[2], &origin, line, "value")?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: origin.clone(),
                    line,
                    msg: format!("non-finite value `{}`", f[2]),
                });
            }
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if j >= manifest.feature_dim {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    n: manifest.feature_dim,
                });
            }
            triplets.push((i, j, v));
        }
        Features::Sparse(CsrMatrix::from_triplets(n, manifest.feature_dim, triplets, |a, b| a + b)?)
    };

    let labels_origin = dir.join("labels.tsv").display().to_string();
    let mut labels = vec![None; n];
    for (line, f) in tsv_rows(&read_required(dir, "labels.tsv")?) {
        if f.len() != 2 {
            return Err(Error::Parse {
                path: labels_origin.clone(),
                line,
                msg: format!("expected 2 fields, found {}", f.len()),
            });
        }
        let i: usize = parse_field(f[0], &labels_origin, line, "node")?;
        let c: usize = parse_field(f[1], &labels_origin, line, "class")?;
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if c >= manifest.class_count {
            return Err(Error::IndexOutOfRange {
                index: c,
                n: manifest.class_count,
            });
        }
        if labels[i].is_some_and(|old| old != c) {
            return Err(Error::Parse {
                path: labels_origin.clone(),
                line,
                msg: format!("node {i} labeled twice"),
            });
        }
        labels[i] = Some(c);
    }

    let masks: Masks = serde_json::from_str(&read_required(dir, "splits.json")?)?;
    let ds = Dataset {
        graph,
        features,
        labels,
        class_count: manifest.class_count,
        masks,
        class_names: None,
        directed_source: manifest.directed_source,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `ds` as a bundle directory, creating it if needed.
pub fn save_bundle(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        n: ds.n(),
        feature_dim: ds.features.cols(),
        class_count: ds.class_count,
        directed_source: ds.directed_source,
        identity_features: ds.features.is_identity(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string(&manifest)? + "\n")?;
    fs::write(dir.join("edges.tsv"), format_edge_list(&ds.graph.upper_edges()))?;

    let features_path = dir.join("features.tsv");
    let mut text = String::new();
    let mut push = |i: usize, j: usize, v: f64| {
        text.push_str(&format!("{i}\t{j}\t{}\n", fmt_f64(v)));
    };
    match &ds.features {
        Features::Identity(_) => {
            if features_path.exists() {
                fs::remove_file(&features_path)?;
            }
        }
        Features::Sparse(x) => {
            x.triplets().for_each(|(i, j, v)| push(i, j, v));
            fs::write(&features_path, text)?;
        }
        Features::Dense(x) => {
            for i in 0..x.rows() {
                for (j, &v) in x.row(i).iter().enumerate() {
                    if v != 0.0 {
                        push(i, j, v);
                    }
                }
            }
            fs::write(&features_path, text)?;
        }
    }

    let labels: String = ds
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| format!("{i}\t{c}\n")))
        .collect();
    fs::write(dir.join("labels.tsv"), labels)?;
    fs::write(dir.join("splits.json"), serde_json::to_string(&ds.masks)? + "\n")?;
    Ok(())
}

/// Draws `per_class` training nodes from every class, then `val_size` and
/// `test_size` nodes uniformly from the remaining labeled nodes.
pub fn random_split(
    labels: &[Option<usize>],
    class_count: usize,
    per_class: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<Masks> {
    let mut rng = stream(seed, Stream::Split);
    let mut by_class = vec![Vec::new(); class_count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = *l {
            if c >= class_count {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    n: class_count,
                });
            }
            by_class[c].push(i);
        }
    }
    let mut train = Vec::with_capacity(per_class * class_count);
    let mut rest = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class {
            return Err(Error::InsufficientNodes(format!(
                "class {c} has {} members, {per_class} requested",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..per_class]);
        rest.extend_from_slice(&members[per_class..]);
    }
    if rest.len() < val_size + test_size {
        return Err(Error::InsufficientNodes(format!(
            "{} labeled nodes left for {val_size} validation and {test_size} test nodes",
            rest.len()
        )));
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let mut val = rest[..val_size].to_vec();
    let mut test = rest[val_size..val_size + test_size].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Masks { train, val, test })
}

/// `n` nodes joined by `2n` distinct undirected edges drawn uniformly, with
/// identity features and one dummy class covering every node.
pub fn random_graph(n: usize, seed: u64) -> Result<Dataset> {
    let pairs = n.saturating_mul(n.saturating_sub(1)) / 2;
    if n < 2 || pairs < 2 * n {
        return Err(Error::InsufficientNodes(format!(
            "{n} nodes cannot hold {} distinct edges",
            2 * n
        )));
    }
    let mut rng = stream(seed, Stream::Graph);
    let mut seen = HashSet::with_capacity(2 * n);
    let mut edges = Vec::with_capacity(2 * n);
    while edges.len() < 2 * n {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if seen.insert(e) {
            edges.push((e.0, e.1, 1.0));
        }
    }
    Ok(Dataset {
        graph: SparseGraph::from_edge_list(&edges, n, true)?,
        features: Features::Identity(n),
        labels: vec![Some(0); n],
        class_count: 1,
        masks: Masks {
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        },
        class_names: None,
        directed_source: false,
    })
}

/// Parameters of [`planted_partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPartition {
    pub n: usize,
    pub classes: usize,
    /// Undirected edges per node.
    pub edges_per_node: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    pub vocabulary: usize,
    pub words_per_node: usize,
    /// Probability that a word is drawn from the node's class topic.
    pub topic_strength: f64,
    pub train_per_class: usize,
    pub val_size: usize,
    pub test_size: usize,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            n: 2000,
            classes: 5,
            edges_per_node: 2,
            homophily: 0.8,
            vocabulary: 500,
            words_per_node: 15,
            topic_strength: 0.25,
            train_per_class: 20,
            val_size: 500,
            test_size: 1000,
        }
    }
}

/// A synthetic citation-style dataset: classes are planted communities and
/// features are bag-of-words counts mixing a class topic with uniform noise.
pub fn planted_partition(p: &PlantedPartition, seed: u64) -> Result<Dataset> {
    if p.classes == 0 || p.n < 2 * p.classes || p.vocabulary < p.classes {
        return Err(Error::InsufficientNodes(format!(
            "{} nodes, {} classes, {} words",
            p.n, p.classes, p.vocabulary
        )));
    }
    let mut rng = stream(seed, Stream::Graph);
    let labels: Vec<Option<usize>> = (0..p.n).map(|i| Some(i % p.classes)).collect();
    let mut members = vec![Vec::new(); p.classes];
    for (i, l) in labels.iter().enumerate() {
        members[l.unwrap()].push(i);
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(p.n * p.edges_per_node);
    while edges.len() < p.n * p.edges_per_node {
        let a = rng.random_range(0..p.n);
        let b = if rng.random::<f64>() < p.homophily {
            let same = &members[a % p.classes];
            same[rng.random_range(0..same.len())]
        } else {
            rng.random_range(0..p.n)
        };
        if a != b && seen.insert((a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b), 1.0));
        }
    }
    let topic = p.vocabulary / p.classes;
    let mut triplets = Vec::with_capacity(p.n * p.words_per_node);
    for (i, l) in labels.iter().enumerate() {
        let c = l.unwrap();
        for _ in 0..p.words_per_node {
            let w = if rng.random::<f64>() < p.topic_strength {
                c * topic + rng.random_range(0..topic)
            } else {
                rng.random_range(0..p.vocabulary)
            };
            triplets.push((i, w, 1.0));
        }
    }
    let features = CsrMatrix::from_triplets(p.n, p.vocabulary, triplets, |a, b| a + b)?;
    let masks = random_split(&labels, p.classes, p.train_per_class, p.val_size, p.test_size, seed)?;
    Ok(Dataset {
        graph: SparseGraph::from_edge_list(&edges, p.n, true)?,
        features: Features::Sparse(features),
        labels,
        class_count: p.classes,
        masks,
        class_names: None,
        directed_source: false,
    })
}

const KARATE_EDGES: &str = include_str!("../assets/karate_edges.tsv");
const KARATE_LABELS: &str = include_str!("../assets/karate_labels.tsv");
/// Highest-degree member of each community.
pub const KARATE_TRAIN_NODES: [usize; 4] = [0, 5, 31, 33];

/// Zachary's karate club with four community labels, identity features, one
/// labeled node per community and every other node in the test mask.
pub fn karate_club() -> Dataset {
    let edges = parse_edge_list(KARATE_EDGES, "karate_edges.tsv").expect("embedded asset");
    let graph = SparseGraph::from_edge_list(&edges, 34, true).expect("embedded asset");
    let mut labels = vec![None; 34];
    for (_, f) in tsv_rows(KARATE_LABELS) {
        let i: usize = f[0].parse().expect("embedded asset");
        labels[i] = Some(f[1].parse().expect("embedded asset"));
    }
    let train = KARATE_TRAIN_NODES.to_vec();
    let test = (0..34).filter(|i| !train.contains(i)).collect();
    Dataset {
        graph,
        features: Features::Identity(34),
        labels,
        class_count: 4,
        masks: Masks {
            train,
            val: Vec::new(),
            test,
        },
        class_names: None,
        directed_source: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_normalize_cases() {
        let x = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[[2.0, 2.0], [0.0, 0.0]]));
        let y = row_normalize(&x).to_dense();
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert_eq!(y.row(1), &[0.0, 0.0]);
        let z = row_normalize(&row_normalize(&x)).to_dense();
        assert!(z.max_abs_diff(&y) <= 1e-15);
    }

    #[test]
    fn random_graph_contract() {
        let ds = random_graph(1000, 3).unwrap();
        assert_eq!(ds.graph.undirected_edge_count(), 2000);
        assert!(ds.graph.upper_edges().iter().all(|&(i, j, _)| i < j));
        assert_eq!(ds, random_graph(1000, 3).unwrap());
        assert!(random_graph(4, 0).is_err());
        assert!(random_graph(5, 0).is_ok());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<_> = (0..40).map(|i| Some(i % 2)).collect();
        let m = random_split(&labels, 2, 1, 5, 10, 9).unwrap();
        assert_eq!(m.train.len(), 2);
        assert_eq!((m.val.len(), m.test.len()), (5, 10));
        assert_eq!(m, random_split(&labels, 2, 1, 5, 10, 9).unwrap());
        m.check(40, &labels).unwrap();
        assert!(matches!(
            random_split(&labels, 2, 21, 0, 0, 0),
            Err(Error::InsufficientNodes(_))
        ));
    }

    #[test]
    fn karate_asset() {
        let ds = karate_club();
        ds.validate().unwrap();
        assert_eq!(ds.n(), 34);
        assert_eq!(ds.graph.undirected_edge_count(), 78);
        assert_eq!(ds.class_count, 4);
        assert_eq!(ds.masks.train.len(), 4);
        assert_eq!(ds.graph.component_count(), 1);
        let classes: HashSet<_> = ds.masks.train.iter().map(|&i| ds.labels[i]).collect();
        assert_eq!(classes.len(), 4);
    }

    #[test]
    fn three_node_bundle_loads_as_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(
            p.join("manifest.json"),
            r#"{"format_version":1,"n":3,"feature_dim":2,"class_count":2,"directed_source":false}"#,
        )
        .unwrap();
        fs::write(p.join("edges.tsv"), "0\t1\n1\t2\t2.5\n").unwrap();
        fs::write(p.join("features.tsv"), "0\t0\t1\n1\t1\t3\n2\t0\t0.5\n").unwrap();
        fs::write(p.join("labels.tsv"), "0\t0\n1\t1\n").unwrap();
        fs::write(p.join("splits.json"), r#"{"train":[0],"val":[],"test":[1]}"#).unwrap();
        let ds = load_bundle(p).unwrap();
        assert_eq!(ds.graph.adjacency().get(2, 1), 2.5);
        assert_eq!(ds.graph.adjacency().get(1, 0), 1.0);
        assert_eq!(ds.features.to_dense().row(1), &[0.0, 3.0]);
        assert_eq!(ds.labels, vec![Some(0), Some(1), None]);
        assert_eq!(ds.masks.test, vec![1]);

        fs::write(p.join("labels.tsv"), "0\t0\n7\t1\n").unwrap();
        assert_eq!(load_bundle(p).unwrap_err().code(), 12);
        fs::write(p.join("labels.tsv"), "0\t0\n").unwrap();
        assert_eq!(load_bundle(p).unwrap_err().code(), 11);
        fs::remove_file(p.join("edges.tsv")).unwrap();
        assert_eq!(load_bundle(p).unwrap_err().code(), 10);
    }
}
