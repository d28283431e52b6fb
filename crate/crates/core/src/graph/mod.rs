//! Graphs with features, labels and semi-supervised splits.

mod io;
pub mod synthetic;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, Matrix, Propagator};

pub use io::{load_graph, write_dataset, DatasetPaths};

/// Adjacency normalization applied after adding self-loops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// `D^{-1/2} (A + I) D^{-1/2}`.
    #[default]
    Symmetric,
    /// `D^{-1} (A + I)`.
    RowStochastic,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Symmetric => "symmetric",
            Normalization::RowStochastic => "row",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric" | "sym" => Some(Normalization::Symmetric),
            "row" | "row-stochastic" => Some(Normalization::RowStochastic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// An undirected graph plus node data. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    splits: Splits,
    normalization: Normalization,
    adjacency: Propagator,
}

/// Structure seen by one training epoch: the edge subset and its normalized
/// adjacency.
#[derive(Clone, Debug)]
pub struct GraphView {
    pub edges: Vec<(usize, usize)>,
    pub adjacency: Propagator,
}

impl Graph {
    /// Validates and assembles a graph. Edges are symmetrized and
    /// deduplicated; self-loops are dropped (normalization adds them back).
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<Option<usize>>,
        splits: Splits,
    ) -> Result<Self> {
        if features.rows() != n_nodes {
            return Err(Error::Precondition(format!(
                "{} feature rows for {n_nodes} nodes",
                features.rows()
            )));
        }
        if labels.len() != n_nodes {
            return Err(Error::Precondition(format!("{} labels for {n_nodes} nodes", labels.len())));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Precondition(format!("edge ({u}, {v}) outside [0, {n_nodes})")));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut seen = vec![None::<&str>; n_nodes];
        for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
            for &i in ids {
                if i >= n_nodes {
                    return Err(Error::Precondition(format!("{name} node {i} outside [0, {n_nodes})")));
                }
                if let Some(prev) = seen[i] {
                    return Err(Error::Precondition(format!("node {i} is in both {prev} and {name}")));
                }
                seen[i] = Some(name);
                if labels[i].is_none() {
                    return Err(Error::Precondition(format!("{name} node {i} has no label")));
                }
            }
        }
        let num_classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let normalization = Normalization::Symmetric;
        let adjacency = Propagator::new(normalize_adjacency(n_nodes, &edges, normalization));
        Ok(Graph {
            n_nodes,
            edges,
            features,
            labels,
            num_classes,
            splits,
            normalization,
            adjacency,
        })
    }

    /// Same graph with a different adjacency normalization.
    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        if normalization != self.normalization {
            self.normalization = normalization;
            self.adjacency = Propagator::new(normalize_adjacency(self.n_nodes, &self.edges, normalization));
        }
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Cached normalized adjacency with self-loops.
    pub fn adjacency(&self) -> &Propagator {
        &self.adjacency
    }

    pub fn full_view(&self) -> GraphView {
        GraphView {
            edges: self.edges.clone(),
            adjacency: self.adjacency.clone(),
        }
    }

    /// Labels of `nodes`; every node in a split is labeled by construction.
    pub fn labels_of(&self, nodes: &[usize]) -> Vec<usize> {
        nodes.iter().map(|&i| self.labels[i].expect("split nodes are labeled")).collect()
    }

    /// Keeps a uniformly chosen `floor((1 - rate) * |E|)` undirected edges and
    /// renormalizes. The graph itself is untouched.
    pub fn drop_edges<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> Result<GraphView> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Precondition(format!("dropedge rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(self.full_view());
        }
        let keep = ((1.0 - rate) * self.edges.len() as f64).floor() as usize;
        let mut idx = sample(rng, self.edges.len(), keep).into_vec();
        idx.sort_unstable();
        let edges: Vec<_> = idx.into_iter().map(|i| self.edges[i]).collect();
        let adjacency = Propagator::new(normalize_adjacency(self.n_nodes, &edges, self.normalization));
        Ok(GraphView { edges, adjacency })
    }
}

/// Normalized adjacency with self-loops for an undirected edge list with
/// `u < v` pairs.
pub fn normalize_adjacency(n: usize, edges: &[(usize, usize)], normalization: Normalization) -> CsrMatrix {
    let mut degree = vec![1usize; n];
    for &(u, v) in edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let weight = |i: usize, j: usize| match normalization {
        Normalization::Symmetric => 1.0 / ((degree[i] * degree[j]) as f64).sqrt(),
        Normalization::RowStochastic => 1.0 / degree[i] as f64,
    };
    let mut triplets = Vec::with_capacity(n + 2 * edges.len());
    for i in 0..n {
        triplets.push((i, i, weight(i, i)));
    }
    for &(u, v) in edges {
        triplets.push((u, v, weight(u, v)));
        triplets.push((v, u, weight(v, u)));
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("edge endpoints validated")
}
