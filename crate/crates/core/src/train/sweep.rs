use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics;
use crate::train::{evaluate, train, TrainConfig};

/// Cartesian grid over config keys, in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

/// Parses `key=v1,v2;key2=v3` (axes may also be separated by whitespace).
/// Keys are [`TrainConfig::set`] keys.
pub fn parse_grid(text: &str) -> Result<SweepGrid> {
    let mut axes = Vec::new();
    for part in text.split(|c: char| c == ';' || c.is_whitespace()).filter(|p| !p.is_empty()) {
        let (k, vs) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid axis '{part}' is not key=v1,v2")))?;
        let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("grid axis '{k}' has no values")));
        }
        TrainConfig::default().set(k.trim(), &values[0])?;
        axes.push((k.trim().to_string(), values));
    }
    if axes.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    Ok(SweepGrid { axes })
}

pub type SweepPoint = Vec<(String, String)>;

impl SweepGrid {
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points: Vec<SweepPoint> = vec![vec![]];
        for (k, vs) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    vs.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((k.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Metrics of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepMetrics {
    pub val_acc: f64,
    pub test_acc: f64,
    pub test_ece: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Failure message when the point could not be trained.
    pub result: std::result::Result<SweepMetrics, String>,
}

fn run_point(graph: &Graph, base: &TrainConfig, point: &SweepPoint) -> Result<SweepMetrics> {
    let mut cfg = base.clone();
    for (k, v) in point {
        cfg.set(k, v)?;
    }
    let out = train(graph, &cfg)?;
    let probs = evaluate(graph, &out.params, &out.posterior, &cfg)?;
    let test = &graph.splits().test;
    let labels = graph.labels_of(test);
    Ok(SweepMetrics {
        val_acc: out.best_val_acc,
        test_acc: metrics::accuracy(&probs, test, &labels)?,
        test_ece: metrics::ece(&probs, test, &labels, metrics::DEFAULT_BINS)?,
        best_epoch: out.best_epoch,
        epochs_run: out.history.records().len(),
    })
}

/// Trains every grid point from the same base seed, so points differ only
/// in the swept values. Failures are recorded and the sweep continues. Rows
/// come back sorted by validation accuracy, failures last.
pub fn sweep(graph: &Graph, base: &TrainConfig, grid: &SweepGrid, jobs: usize) -> Vec<SweepRow> {
    let points = grid.points();
    let jobs = jobs.clamp(1, points.len().max(1));
    let mut rows: Vec<SweepRow> = if jobs == 1 {
        points
            .iter()
            .map(|p| SweepRow {
                point: p.clone(),
                result: run_point(graph, base, p).map_err(|e| e.to_string()),
            })
            .collect()
    } else {
        let mut slots: Vec<Option<SweepRow>> = vec![None; points.len()];
        std::thread::scope(|s| {
            let chunk = points.len().div_ceil(jobs);
            for (ps, out) in points.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                s.spawn(move || {
                    for (p, o) in ps.iter().zip(out.iter_mut()) {
                        *o = Some(SweepRow {
                            point: p.clone(),
                            result: run_point(graph, base, p).map_err(|e| e.to_string()),
                        });
                    }
                });
            }
        });
        slots.into_iter().map(|r| r.expect("every slot filled")).collect()
    };
    rows.sort_by(|a, b| match (&a.result, &b.result) {
        (Ok(x), Ok(y)) => y.val_acc.total_cmp(&x.val_acc),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    rows
}

/// Tab-separated table with one row per grid point.
pub fn sweep_table(grid: &SweepGrid, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    for (k, _) in &grid.axes {
        let _ = write!(out, "{k}\t");
    }
    out.push_str("val_acc\ttest_acc\ttest_ece\tbest_epoch\tepochs\terror\n");
    for r in rows {
        for (_, v) in &r.point {
            let _ = write!(out, "{v}\t");
        }
        match &r.result {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{:.6}\t{:.6}\t{:.6}\t{}\t{}\t",
                    m.val_acc, m.test_acc, m.test_ece, m.best_epoch, m.epochs_run
                );
            }
            Err(e) => {
                let _ = writeln!(out, "\t\t\t\t\t{}", e.replace(['\t', '\n'], " "));
            }
        }
    }
    out
}
