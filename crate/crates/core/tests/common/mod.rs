#![allow(dead_code)]

use gcn::data::{planted_partition, Dataset, PlantedPartition};
use gcn::{DenseMatrix, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// G(n, p) with optional random weights in [0.5, 2).
pub fn erdos_renyi(n: usize, p: f64, weighted: bool, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                let w = if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
                edges.push((i, j, w));
            }
        }
    }
    SparseGraph::from_edge_list(&edges, n, true).unwrap()
}

pub fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::from_vec(rows, cols, values).unwrap()
}

/// Row `perm[i]` of the result is row `i` of `m`.
pub fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(i));
    }
    out
}

pub fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// A small planted-partition dataset that trains in well under a second.
pub fn small_citation(seed: u64) -> Dataset {
    let p = PlantedPartition {
        n: 300,
        classes: 3,
        vocabulary: 60,
        words_per_node: 10,
        train_per_class: 10,
        val_size: 60,
        test_size: 120,
        ..PlantedPartition::default()
    };
    let ds = planted_partition(&p, seed).unwrap();
    Dataset {
        features: ds.features.row_normalized(),
        ..ds
    }
}

/// Hop distances from `source`; `usize::MAX` when unreachable.
pub fn bfs(g: &SparseGraph, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n()];
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
