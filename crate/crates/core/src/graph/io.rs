//! Plain-text dataset format.
//!
//! - edges: `u<TAB>v` per line, 0-based, `#` starts a comment.
//! - features: CSV, one row of reals per node, no header.
//! - labels: `node_id,class_index` per line; missing nodes are unlabeled.
//! - masks: `train:`, `val:`, `test:` each followed by space-separated ids.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{Graph, Splits};
use crate::tensor::Matrix;

/// File locations of one dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub masks: PathBuf,
}

impl DatasetPaths {
    /// Conventional names inside a dataset directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            edges: dir.join("edges.tsv"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
            masks: dir.join("masks.txt"),
        }
    }

    pub fn load(&self) -> Result<Graph> {
        load_graph(&self.edges, &self.features, &self.labels, &self.masks)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_id(tok: &str, n: usize, path: &Path, line: usize) -> Result<usize> {
    let id: usize = tok
        .trim()
        .parse()
        .map_err(|_| Error::invalid(path, Some(line), format!("'{tok}' is not a node id")))?;
    if id >= n {
        return Err(Error::invalid(path, Some(line), format!("node id {id} outside [0, {n})")));
    }
    Ok(id)
}

fn load_features(path: &Path) -> Result<Matrix> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, l) in content_lines(&text) {
        let before = data.len();
        for tok in l.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::invalid(path, Some(line), format!("'{tok}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::invalid(path, Some(line), "non-finite feature value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::invalid(path, Some(line), format!("{width} columns, expected {c}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::invalid(path, None, "no feature rows"))?;
    Matrix::from_vec(rows, cols, data)
}

fn load_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut it = l.split(|c: char| c == '\t' || c.is_whitespace()).filter(|t| !t.is_empty());
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::invalid(path, Some(line), "expected 'u<TAB>v'"));
        };
        edges.push((parse_id(u, n, path, line)?, parse_id(v, n, path, line)?));
    }
    Ok(edges)
}

fn load_labels(path: &Path, n: usize) -> Result<Vec<Option<usize>>> {
    let text = read(path)?;
    let mut labels = vec![None; n];
    for (line, l) in content_lines(&text) {
        let Some((node, class)) = l.split_once(',') else {
            return Err(Error::invalid(path, Some(line), "expected 'node_id,class_index'"));
        };
        let node = parse_id(node, n, path, line)?;
        let class: usize = class
            .trim()
            .parse()
            .map_err(|_| Error::invalid(path, Some(line), format!("'{class}' is not a class index")))?;
        match labels[node] {
            Some(prev) if prev != class => {
                return Err(Error::invalid(
                    path,
                    Some(line),
                    format!("node {node} labeled both {prev} and {class}"),
                ));
            }
            _ => labels[node] = Some(class),
        }
    }
    Ok(labels)
}

fn load_masks(path: &Path, labels: &[Option<usize>]) -> Result<Splits> {
    let text = read(path)?;
    let n = labels.len();
    let mut splits = Splits::default();
    let mut owner: Vec<Option<&'static str>> = vec![None; n];
    let mut current: Option<&'static str> = None;
    for (line, l) in content_lines(&text) {
        let mut rest = l;
        for name in ["train", "val", "test"] {
            if let Some(tail) = l.strip_prefix(name).and_then(|t| t.trim_start().strip_prefix(':')) {
                current = Some(name);
                rest = tail;
            }
        }
        let Some(name) = current else {
            return Err(Error::invalid(path, Some(line), "ids before any 'train:'/'val:'/'test:' header"));
        };
        for tok in rest.split_whitespace() {
            let id = parse_id(tok, n, path, line)?;
            if let Some(prev) = owner[id] {
                return Err(Error::invalid(
                    path,
                    Some(line),
                    format!("node {id} listed in both {prev} and {name}"),
                ));
            }
            if labels[id].is_none() {
                return Err(Error::invalid(path, Some(line), format!("{name} node {id} has no label")));
            }
            owner[id] = Some(name);
            match name {
                "train" => splits.train.push(id),
                "val" => splits.val.push(id),
                _ => splits.test.push(id),
            }
        }
    }
    Ok(splits)
}

/// Loads and validates a dataset. Errors name the offending file and line.
pub fn load_graph(
    edge_path: impl AsRef<Path>,
    feature_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    mask_path: impl AsRef<Path>,
) -> Result<Graph> {
    let features = load_features(feature_path.as_ref())?;
    let n = features.rows();
    let edges = load_edges(edge_path.as_ref(), n)?;
    let labels = load_labels(label_path.as_ref(), n)?;
    let splits = load_masks(mask_path.as_ref(), &labels)?;
    Graph::new(n, edges, features, labels, splits)
}

/// Writes `graph` in the on-disk format. Feature values use the shortest
/// representation that round-trips.
pub fn write_dataset(graph: &Graph, paths: &DatasetPaths) -> Result<()> {
    let mut edges = String::new();
    for &(u, v) in graph.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    let mut feats = String::new();
    for r in 0..graph.n_nodes() {
        let row: Vec<String> = graph.features().row(r).iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(feats, "{}", row.join(","));
    }
    let mut labels = String::new();
    for (i, l) in graph.labels().iter().enumerate() {
        if let Some(c) = l {
            let _ = writeln!(labels, "{i},{c}");
        }
    }
    let join = |ids: &[usize]| ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let s = graph.splits();
    let masks = format!("train: {}\nval: {}\ntest: {}\n", join(&s.train), join(&s.val), join(&s.test));
    for (path, body) in [
        (&paths.edges, edges),
        (&paths.features, feats),
        (&paths.labels, labels),
        (&paths.masks, masks),
    ] {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
