//! Sparse weighted graphs and the tab-separated edge-list format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Weighted adjacency matrix without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    adjacency: CsrMatrix,
    symmetric: bool,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: CsrMatrix::zeros(n, n),
            symmetric: true,
        }
    }

    /// Builds a graph from `(i, j, weight)` triples.
    ///
    /// Duplicate pairs keep the largest weight and self-loops are dropped.
    /// With `symmetrize`, every pair is mirrored before merging.
    pub fn from_edge_list(pairs: &[(usize, usize, f64)], n: usize, symmetrize: bool) -> Result<Self> {
        let mut triplets = Vec::with_capacity(pairs.len() * if symmetrize { 2 } else { 1 });
        for &(i, j, w) in pairs {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { i, j, weight: w });
            }
            if i == j {
                continue;
            }
            triplets.push((i, j, w));
            if symmetrize {
                triplets.push((j, i, w));
            }
        }
        let adjacency = CsrMatrix::from_triplets(n, n, triplets, f64::max)?;
        let symmetric = symmetrize || adjacency.is_symmetric();
        Ok(Self {
            adjacency,
            symmetric,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of stored (directed) entries.
    pub fn stored_entries(&self) -> usize {
        self.adjacency.nnz()
    }

    /// Undirected edge count of a symmetric graph.
    pub fn undirected_edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(i).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row_nnz(i)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn upper_edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .triplets()
            .filter(|&(i, j, _)| i < j)
            .collect()
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pairs: Vec<_> = self
            .adjacency
            .triplets()
            .map(|(i, j, w)| (perm[i], perm[j], w))
            .collect();
        Self::from_edge_list(&pairs, self.n(), false)
    }

    /// Number of connected components (BFS over stored entries).
    pub fn component_count(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }
}

/// Row sums of the adjacency matrix; zero for isolated nodes.
pub fn degree_vector(g: &SparseGraph) -> Vec<f64> {
    (0..g.n()).map(|i| g.adjacency().row_sum(i)).collect()
}

/// Parses `src<TAB>dst[<TAB>weight]` lines. Blank lines and lines starting
/// with `#` are skipped; a missing weight means 1.0.
pub fn parse_edge_list(text: &str, origin: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(bad(format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
        }
        let src = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("bad source index `{}`: {e}", fields[0])))?;
        let dst = fields[1]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("bad target index `{}`: {e}", fields[1])))?;
        let weight = match fields.get(2) {
            Some(w) => w
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("bad weight `{w}`: {e}")))?,
            None => 1.0,
        };
        edges.push((src, dst, weight));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text, &path.display().to_string())
}

/// Formats edges one per line; unit weights are written without a weight column.
pub fn format_edge_list(edges: &[(usize, usize, f64)]) -> String {
    let mut out = String::new();
    for &(i, j, w) in edges {
        if w == 1.0 {
            let _ = writeln!(out, "{i}\t{j}");
        } else {
            let _ = writeln!(out, "{i}\t{j}\t{}", crate::metrics::fmt_f64(w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_edge_list_gives_empty_graph() {
        let g = SparseGraph::from_edge_list(&[], 3, true).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.stored_entries(), 0);
        assert_eq!(degree_vector(&g), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetrize_mirrors_edges() {
        let g = SparseGraph::from_edge_list(&[(0, 1, 1.0)], 2, true).unwrap();
        let entries: Vec<_> = g.adjacency().triplets().collect();
        assert_eq!(entries, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(g.is_symmetric());
    }

    #[test]
    fn duplicates_keep_max_and_self_loops_vanish() {
        let g = SparseGraph::from_edge_list(
            &[(0, 1, 0.5), (1, 0, 2.0), (2, 2, 1.0), (0, 1, 1.0)],
            3,
            true,
        )
        .unwrap();
        assert_eq!(g.adjacency().get(0, 1), 2.0);
        assert_eq!(g.adjacency().get(1, 0), 2.0);
        assert_eq!(g.adjacency().get(2, 2), 0.0);
        assert_eq!(g.stored_entries(), 2);
    }

    #[test]
    fn invalid_input_is_rejected() {
        assert!(matches!(
            SparseGraph::from_edge_list(&[(0, 3, 1.0)], 3, true),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
        assert!(matches!(
            SparseGraph::from_edge_list(&[(0, 1, 0.0)], 3, true),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            SparseGraph::from_edge_list(&[(0, 1, f64::NAN)], 3, true),
            Err(Error::InvalidWeight { .. })
        ));
    }

    #[test]
    fn degrees_of_small_graphs() {
        let path = SparseGraph::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0)], 3, true).unwrap();
        assert_eq!(degree_vector(&path), vec![1.0, 2.0, 1.0]);
        let k3 = SparseGraph::from_edge_list(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 3, true)
            .unwrap();
        assert_eq!(degree_vector(&k3), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn parses_edge_list_text() {
        let text = "# comment\n0\t1\n1\t2\t0.5\n\n";
        let edges = parse_edge_list(text, "mem").unwrap();
        assert_eq!(edges, vec![(0, 1, 1.0), (1, 2, 0.5)]);
        let err = parse_edge_list("0 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn edge_list_text_round_trips() {
        let edges = vec![(0, 1, 1.0), (1, 2, 0.1 + 0.2)];
        let text = format_edge_list(&edges);
        assert_eq!(parse_edge_list(&text, "mem").unwrap(), edges);
    }
}
