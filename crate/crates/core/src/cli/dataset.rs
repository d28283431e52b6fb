//! Dataset sources for the command line: on-disk directories, synthetic
//! graphs (optionally cached) and conversion of LINQS citation dumps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::synthetic::{sbm_dataset, SbmSpec};
use crate::graph::{write_dataset, DatasetPaths, Graph, Splits};
use crate::rng::{substream, tag};
use crate::tensor::Matrix;

/// Environment variable naming a directory for generated datasets.
pub const CACHE_ENV: &str = "BNA_CACHE_DIR";

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    /// `sbm` (small two-block graph) or `citation` (citation-sized SBM).
    Synthetic { name: String, seed: u64 },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Dir(d) => d.display().to_string(),
            DataSource::Synthetic { name, seed } => format!("synthetic:{name}:{seed}"),
        }
    }

    pub fn load(&self) -> Result<Graph> {
        match self {
            DataSource::Dir(dir) => DatasetPaths::in_dir(dir).load(),
            DataSource::Synthetic { name, seed } => {
                let spec = synthetic_spec(name)?;
                let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
                match cache {
                    Some(root) => {
                        let dir = root.join(format!("{name}-{seed}"));
                        let paths = DatasetPaths::in_dir(&dir);
                        if !paths.masks.exists() {
                            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                            write_dataset(&generate(&spec, *seed), &paths)?;
                            log::info!("cached {name}-{seed} in {}", dir.display());
                        }
                        paths.load()
                    }
                    None => Ok(generate(&spec, *seed)),
                }
            }
        }
    }
}

fn synthetic_spec(name: &str) -> Result<SbmSpec> {
    match name {
        "sbm" => Ok(SbmSpec::default()),
        "citation" => Ok(SbmSpec::citation_like()),
        _ => Err(Error::Config(format!("unknown synthetic dataset '{name}' (sbm, citation)"))),
    }
}

fn generate(spec: &SbmSpec, seed: u64) -> Graph {
    sbm_dataset(spec, &mut substream(seed, &[]))
}

/// Split sizes for converted datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSpec {
    /// 20 labels per class, 500 validation and 1000 test nodes.
    fn default() -> Self {
        SplitSpec {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Random per-class training set, then validation and test drawn from the
/// remaining labeled nodes.
pub fn planetoid_split(labels: &[usize], num_classes: usize, spec: SplitSpec, seed: u64) -> Result<Splits> {
    let mut rng = substream(seed, &[tag::SPLIT]);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![0usize; num_classes];
    let mut splits = Splits::default();
    let mut rest = Vec::new();
    for i in order {
        if taken[labels[i]] < spec.train_per_class {
            taken[labels[i]] += 1;
            splits.train.push(i);
        } else {
            rest.push(i);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < spec.train_per_class) {
        return Err(Error::Precondition(format!(
            "class {c} has {} nodes, fewer than {} training labels",
            taken[c], spec.train_per_class
        )));
    }
    if rest.len() < spec.val + spec.test {
        return Err(Error::Precondition(format!(
            "{} nodes left after training labels, need {} for val and test",
            rest.len(),
            spec.val + spec.test
        )));
    }
    splits.val = rest[..spec.val].to_vec();
    splits.test = rest[spec.val..spec.val + spec.test].to_vec();
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// A LINQS dump converted to the crate's dataset layout.
#[derive(Clone, Debug)]
pub struct Converted {
    pub graph: Graph,
    /// Class names in index order.
    pub classes: Vec<String>,
    /// Original node ids in node order.
    pub ids: Vec<String>,
    /// Citation lines naming an unknown id.
    pub dropped_edges: usize,
}

/// Reads `<id> <f_1> .. <f_F> <class>` rows and `<cited> <citing>` pairs
/// (whitespace separated). Classes are indexed in sorted name order.
pub fn convert_linqs(content: &Path, cites: &Path, split: SplitSpec, seed: u64) -> Result<Converted> {
    let text = std::fs::read_to_string(content).map_err(|e| Error::io(content, e))?;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(Error::invalid(content, Some(i + 1), "expected id, features and class"));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::invalid(content, Some(i + 1), "non-numeric feature"))?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(Error::invalid(
                    content,
                    Some(i + 1),
                    format!("{} features, expected {}", feats.len(), first.len()),
                ));
            }
        }
        ids.push(fields[0].to_string());
        rows.push(feats);
        class_names.push(fields[fields.len() - 1].to_string());
    }
    if ids.is_empty() {
        return Err(Error::invalid(content, None, "no nodes"));
    }
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if index.len() != ids.len() {
        return Err(Error::invalid(content, None, "duplicate node ids"));
    }
    let mut classes: Vec<String> = class_names.clone();
    classes.sort();
    classes.dedup();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(c).expect("class collected"))
        .collect();

    let text = std::fs::read_to_string(cites).map_err(|e| Error::io(cites, e))?;
    let mut edges = Vec::new();
    let mut dropped_edges = 0;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            [a, b] => match (index.get(a), index.get(b)) {
                (Some(&u), Some(&v)) => edges.push((u, v)),
                _ => dropped_edges += 1,
            },
            _ => return Err(Error::invalid(cites, Some(i + 1), "expected two ids")),
        }
    }
    let n = ids.len();
    let features = Matrix::from_vec(n, rows[0].len(), rows.into_iter().flatten().collect())?;
    let splits = planetoid_split(&labels, classes.len(), split, seed)?;
    let graph = Graph::new(n, edges, features, labels.into_iter().map(Some).collect(), splits)?;
    Ok(Converted {
        graph,
        classes,
        ids,
        dropped_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planetoid_split_sizes_and_disjointness() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let spec = SplitSpec {
            train_per_class: 5,
            val: 20,
            test: 30,
        };
        let s = planetoid_split(&labels, 3, spec, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (15, 20, 30));
        for c in 0..3 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 5);
        }
        let mut all: Vec<usize> = [s.train.clone(), s.val.clone(), s.test.clone()].concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 65);
        assert_eq!(planetoid_split(&labels, 3, spec, 1).unwrap(), s);
        assert!(planetoid_split(&labels, 3, SplitSpec { val: 90, ..spec }, 1).is_err());
    }

    #[test]
    fn converts_linqs_files() {
        let dir = tempfile::tempdir().unwrap();
        let content = dir.path().join("toy.content");
        let cites = dir.path().join("toy.cites");
        let mut text = String::new();
        for i in 0..12 {
            let class = if i % 2 == 0 { "Theory" } else { "Neural_Networks" };
            text.push_str(&format!("p{i}\t{}\t0\t1\t{class}\n", i % 2));
        }
        std::fs::write(&content, text).unwrap();
        std::fs::write(&cites, "p0 p1\np1 p2\np2 p99\np3\tp3\n").unwrap();
        let split = SplitSpec {
            train_per_class: 2,
            val: 3,
            test: 4,
        };
        let c = convert_linqs(&content, &cites, split, 0).unwrap();
        assert_eq!(c.graph.n_nodes(), 12);
        assert_eq!(c.graph.n_features(), 3);
        assert_eq!(c.classes, vec!["Neural_Networks".to_string(), "Theory".to_string()]);
        assert_eq!(c.graph.labels()[0], Some(1));
        assert_eq!(c.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(c.dropped_edges, 1);
        std::fs::write(&cites, "p0 p1 p2\n").unwrap();
        assert!(convert_linqs(&content, &cites, split, 0).is_err());
    }

    #[test]
    fn synthetic_source_is_seeded() {
        let a = DataSource::Synthetic {
            name: "sbm".into(),
            seed: 4,
        };
        let (g1, g2) = (a.load().unwrap(), a.load().unwrap());
        assert_eq!(g1.edges(), g2.edges());
        assert!(DataSource::Synthetic {
            name: "nope".into(),
            seed: 0
        }
        .load()
        .is_err());
    }
}
