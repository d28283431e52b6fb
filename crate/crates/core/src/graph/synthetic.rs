//! Random graph generators used by tests, the theory harness and examples.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::{Graph, Splits};
use crate::tensor::Matrix;

/// Erdős–Rényi `G(n, p)` edge list with `u < v`.
pub fn erdos_renyi_edges<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Structure-only Erdős–Rényi graph (one zero feature, no labels).
pub fn erdos_renyi_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    let edges = erdos_renyi_edges(n, p, rng);
    Graph::new(n, edges, Matrix::zeros(n, 1), vec![None; n], Splits::default()).expect("valid by construction")
}

/// Stochastic block model edges; `block[i]` is the community of node `i`.
pub fn sbm_edges<R: Rng + ?Sized>(block: &[usize], p_in: f64, p_out: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let n = block.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Block assignment for consecutive blocks of the given sizes.
pub fn blocks(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat(c).take(s)).collect()
}

/// Node features for an SBM dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureModel {
    /// Isotropic Gaussian around a class mean: `±shift` on every coordinate
    /// for two classes, a one-hot-scaled mean otherwise.
    Gaussian { dim: usize, shift: f64 },
    /// Binary bag of words: each class prefers its own vocabulary slice.
    BagOfWords {
        vocab: usize,
        words_per_node: usize,
        on_topic: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub features: FeatureModel,
    pub train_per_class: usize,
    pub val_per_class: usize,
    /// Test nodes per class; `None` puts every remaining node in test.
    pub test_per_class: Option<usize>,
}

impl Default for SbmSpec {
    /// Two blocks of 30, `p_in = 0.3`, `p_out = 0.02`, 8-dim Gaussian
    /// features, 10/10/10 split per class.
    fn default() -> Self {
        SbmSpec {
            block_sizes: vec![30, 30],
            p_in: 0.3,
            p_out: 0.02,
            features: FeatureModel::Gaussian { dim: 8, shift: 0.75 },
            train_per_class: 10,
            val_per_class: 10,
            test_per_class: None,
        }
    }
}

impl SbmSpec {
    /// Citation-graph-sized planted partition: 7 classes over 2708 nodes,
    /// about 4 neighbors per node, 80% of them in-class, sparse binary
    /// features, 20 training labels per class.
    pub fn citation_like() -> Self {
        let sizes = vec![351, 217, 418, 818, 426, 298, 180];
        SbmSpec {
            block_sizes: sizes,
            p_in: 0.0068,
            p_out: 0.00035,
            features: FeatureModel::BagOfWords {
                vocab: 1433,
                words_per_node: 18,
                on_topic: 0.35,
            },
            train_per_class: 20,
            val_per_class: 72,
            test_per_class: None,
        }
    }
}

/// Generates an SBM with class-dependent features and a per-class split.
pub fn sbm_dataset<R: Rng + ?Sized>(spec: &SbmSpec, rng: &mut R) -> Graph {
    let block = blocks(&spec.block_sizes);
    let n = block.len();
    let k = spec.block_sizes.len();
    let edges = sbm_edges(&block, spec.p_in, spec.p_out, rng);
    let features = match spec.features {
        FeatureModel::Gaussian { dim, shift } => {
            let mut x = Matrix::zeros(n, dim);
            for i in 0..n {
                for d in 0..dim {
                    let mean = if k == 2 {
                        if block[i] == 0 {
                            shift
                        } else {
                            -shift
                        }
                    } else if d % k == block[i] {
                        shift
                    } else {
                        0.0
                    };
                    let z: f64 = StandardNormal.sample(rng);
                    x[(i, d)] = mean + z;
                }
            }
            x
        }
        FeatureModel::BagOfWords {
            vocab,
            words_per_node,
            on_topic,
        } => {
            let slice = vocab / k;
            let mut x = Matrix::zeros(n, vocab);
            for i in 0..n {
                for _ in 0..words_per_node {
                    let w = if rng.gen::<f64>() < on_topic {
                        block[i] * slice + rng.gen_range(0..slice)
                    } else {
                        rng.gen_range(0..vocab)
                    };
                    x[(i, w)] = 1.0;
                }
            }
            // Row-normalize like the usual citation preprocessing.
            for i in 0..n {
                let s: f64 = x.row(i).iter().sum();
                if s > 0.0 {
                    for v in x.row_mut(i) {
                        *v /= s;
                    }
                }
            }
            x
        }
    };
    let mut splits = Splits::default();
    for c in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&i| block[i] == c).collect();
        members.shuffle(rng);
        let (tr, rest) = members.split_at(spec.train_per_class.min(members.len()));
        let (va, rest) = rest.split_at(spec.val_per_class.min(rest.len()));
        let te = match spec.test_per_class {
            Some(t) => &rest[..t.min(rest.len())],
            None => rest,
        };
        splits.train.extend_from_slice(tr);
        splits.val.extend_from_slice(va);
        splits.test.extend_from_slice(te);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    let labels = block.into_iter().map(Some).collect();
    Graph::new(n, edges, features, labels, splits).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn default_sbm_shape() {
        let g = sbm_dataset(&SbmSpec::default(), &mut substream(1, &[]));
        assert_eq!(g.n_nodes(), 60);
        assert_eq!(g.n_features(), 8);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.splits().train.len(), 20);
        assert_eq!(g.splits().val.len(), 20);
        assert_eq!(g.splits().test.len(), 20);
    }

    #[test]
    fn citation_like_dimensions() {
        let g = sbm_dataset(&SbmSpec::citation_like(), &mut substream(2, &[]));
        assert_eq!(g.n_nodes(), 2708);
        assert_eq!(g.n_features(), 1433);
        assert_eq!(g.num_classes(), 7);
        assert_eq!(g.splits().train.len(), 140);
        assert!(g.splits().val.len() >= 500 && g.splits().test.len() >= 1000);
        let avg_deg = 2.0 * g.edges().len() as f64 / 2708.0;
        assert!((3.0..5.0).contains(&avg_deg), "{avg_deg}");
    }
}
