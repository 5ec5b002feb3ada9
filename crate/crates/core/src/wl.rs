//! One-dimensional Weisfeiler-Lehman color refinement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Node colors numbered densely in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub round: usize,
}

impl Coloring {
    /// Renumbers arbitrary color ids canonically.
    pub fn new(raw: &[usize], round: usize) -> Self {
        let mut ids = HashMap::new();
        let colors = raw
            .iter()
            .map(|c| {
                let next = ids.len();
                *ids.entry(*c).or_insert(next)
            })
            .collect();
        Self { colors, round }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            colors: vec![0; n],
            round: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.colors.iter().max().map_or(0, |m| m + 1)
    }
}

/// True iff every color class of `b` lies inside a color class of `a`.
pub fn partition_refines(a: &Coloring, b: &Coloring) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "partition_refines",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (&ca, &cb) in a.colors.iter().zip(&b.colors) {
        if *owner.entry(cb).or_insert(ca) != ca {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs refinement rounds until the partition stops splitting or
/// `max_rounds` is reached. The returned history starts with the
/// (canonicalized) initial coloring and ends with the last coloring computed.
pub fn wl1_refine(g: &SparseGraph, initial: &Coloring, max_rounds: usize) -> Result<Vec<Coloring>> {
    if initial.len() != g.n() {
        return Err(Error::DimensionMismatch {
            op: "wl1_refine",
            left: (initial.len(), 1),
            right: (g.n(), 1),
        });
    }
    if max_rounds == 0 {
        return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
    }
    let mut history = vec![Coloring::new(&initial.colors, 0)];
    for round in 1..=max_rounds {
        let prev = history.last().expect("nonempty");
        let mut table: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let raw: Vec<usize> = (0..g.n())
            .map(|i| {
                let mut neigh: Vec<usize> = g.neighbors(i).map(|j| prev.colors[j]).collect();
                neigh.sort_unstable();
                let next = table.len();
                *table.entry((prev.colors[i], neigh)).or_insert(next)
            })
            .collect();
        let next = Coloring::new(&raw, round);
        let stable = next.distinct() == prev.distinct();
        history.push(next);
        if stable {
            break;
        }
    }
    Ok(history)
}
