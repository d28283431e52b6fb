//! Linearized propagation and the oversmoothing inequalities.
//!
//! Propagation here drops weights and nonlinearities: a plain stack applies
//! `Â` per layer, a residual stack `Â + I`, and the adaptive stack
//! `π_l Â + I`. On the shifted operator `(Â + I)/2`, whose spectrum lies in
//! (0, 1], the plain stack converges to the top eigenspace U, and the residual
//! and adaptive stacks keep a larger angle from it.

mod spectral;

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

pub use spectral::{
    eigendecompose, spectral_shift, subspace_distance_and_angle, SpectralDecomposition, SubspaceGeometry, TOP_TOL,
};

use crate::error::{Error, Result};
use crate::graph::synthetic::{blocks, erdos_renyi_edges, sbm_edges};
use crate::graph::{normalize_adjacency, Normalization};
use crate::process::{concrete_relaxed, stick_breaking, StickBreakingPrior, DEFAULT_TAU};
use crate::rng::{logistic, substream, tag};
use crate::tensor::Matrix;

/// Slack on the angle and distance inequalities.
pub const CHECK_TOL: f64 = 1e-10;
/// Slack on the exponential distance bound.
pub const BOUND_TOL: f64 = 1e-8;
pub const MAX_NODES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    Gcn,
    Res,
    Bna,
}

/// `H_1..H_L` under linear propagation. `pi` is required for `Bna`.
pub fn linear_propagate(
    variant: Propagation,
    a: &Matrix,
    h0: &Matrix,
    depth: usize,
    pi: Option<&[f64]>,
) -> Result<Vec<Matrix>> {
    if a.rows() != a.cols() || a.cols() != h0.rows() {
        return Err(Error::Dimension {
            op: "linear_propagate",
            left: a.shape(),
            right: h0.shape(),
        });
    }
    let pi = match variant {
        Propagation::Bna => {
            let pi = pi.ok_or_else(|| Error::Precondition("adaptive propagation needs a π sequence".into()))?;
            if pi.len() < depth {
                return Err(Error::Precondition(format!("π has {} entries, depth is {depth}", pi.len())));
            }
            if let Some(p) = pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::domain("linear_propagate", format!("π entry {p} outside [0, 1]")));
            }
            pi
        }
        _ => &[],
    };
    let mut out = Vec::with_capacity(depth);
    let mut h = h0.clone();
    for l in 0..depth {
        let ah = a.matmul(&h)?;
        h = match variant {
            Propagation::Gcn => ah,
            Propagation::Res => ah.zip_map(&h, |x, y| x + y),
            Propagation::Bna => ah.zip_map(&h, |x, y| pi[l] * x + y),
        };
        out.push(h.clone());
    }
    Ok(out)
}

/// Adaptive propagation with one mask value per (layer, column):
/// `H_l[:, c] = z_lc Â H_{l-1}[:, c] + H_{l-1}[:, c]`. `z` is `depth × cols`.
pub fn masked_propagate(a: &Matrix, h0: &Matrix, z: &Matrix) -> Result<Vec<Matrix>> {
    if z.cols() != h0.cols() {
        return Err(Error::Dimension {
            op: "masked_propagate",
            left: z.shape(),
            right: h0.shape(),
        });
    }
    let mut out = Vec::with_capacity(z.rows());
    let mut h = h0.clone();
    for l in 0..z.rows() {
        let mut ah = a.matmul(&h)?;
        for r in 0..ah.rows() {
            for (c, v) in ah.row_mut(r).iter_mut().enumerate() {
                *v = z.row(l)[c] * *v + h.row(r)[c];
            }
        }
        h = ah;
        out.push(h.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ensemble {
    ErdosRenyi { n: usize, p: f64 },
    Sbm { sizes: Vec<usize>, p_in: f64, p_out: f64 },
}

impl Ensemble {
    pub fn n_nodes(&self) -> usize {
        match self {
            Ensemble::ErdosRenyi { n, .. } => *n,
            Ensemble::Sbm { sizes, .. } => sizes.iter().sum(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Ensemble::ErdosRenyi { n, p } => format!("er:{n}:{p}"),
            Ensemble::Sbm { sizes, p_in, p_out } => {
                let s: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
                format!("sbm:{}:{p_in}:{p_out}", s.join("/"))
            }
        }
    }

    /// `er:N:P` or `sbm:S1/S2/..:P_IN:P_OUT`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("ensemble '{s}' is not er:N:P or sbm:S1/S2:P_IN:P_OUT"));
        let parts: Vec<&str> = s.split(':').collect();
        let e = match parts.as_slice() {
            ["er", n, p] => Ensemble::ErdosRenyi {
                n: n.parse().map_err(|_| bad())?,
                p: p.parse().map_err(|_| bad())?,
            },
            ["sbm", sizes, p_in, p_out] => Ensemble::Sbm {
                sizes: sizes
                    .split('/')
                    .map(|x| x.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
                p_in: p_in.parse().map_err(|_| bad())?,
                p_out: p_out.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if n == 0 || n > MAX_NODES {
            return Err(Error::Config(format!("ensemble size {n} outside 1..={MAX_NODES}")));
        }
        let probs: Vec<f64> = match self {
            Ensemble::ErdosRenyi { p, .. } => vec![*p],
            Ensemble::Sbm { sizes, p_in, p_out } => {
                if sizes.contains(&0) {
                    return Err(Error::Config("empty SBM block".into()));
                }
                vec![*p_in, *p_out]
            }
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!("edge probabilities {probs:?} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn sample_edges<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(usize, usize)> {
        match self {
            Ensemble::ErdosRenyi { n, p } => erdos_renyi_edges(*n, *p, rng),
            Ensemble::Sbm { sizes, p_in, p_out } => sbm_edges(&blocks(sizes), *p_in, *p_out, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryConfig {
    pub ensemble: Ensemble,
    pub trials: usize,
    pub depth: usize,
    /// Columns of the random `H_0`.
    pub features: usize,
    /// Prior on the stick fractions that generates π.
    pub alpha: f64,
    pub beta: f64,
    /// Temperature of the per-column masks in the unasserted sampled check.
    pub tau: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            ensemble: Ensemble::ErdosRenyi { n: 30, p: 0.2 },
            trials: 100,
            depth: 20,
            features: 4,
            alpha: 5.0,
            beta: 2.0,
            tau: DEFAULT_TAU,
            normalization: Normalization::Symmetric,
            seed: 0,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.trials == 0 || self.depth == 0 || self.features == 0 {
            return Err(Error::Config("trials, depth and features must be at least 1".into()));
        }
        StickBreakingPrior::new(self.alpha, self.beta)?;
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau={} must be positive", self.tau)));
        }
        Ok(())
    }

    /// First layer (1-based) whose π is forced to 0 in the freezing check.
    pub fn freeze_layer(&self) -> usize {
        self.depth.div_ceil(2)
    }
}

/// Variants tracked per depth.
pub const VARIANTS: [&str; 5] = ["gcn", "res", "bna_mean", "bna_draw", "bna_sampled"];

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRow {
    pub trial: usize,
    /// 0 is `H_0`.
    pub depth: usize,
    pub variant: &'static str,
    pub geometry: SubspaceGeometry,
}

/// Outcome of one random graph.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialChecks {
    pub trial: usize,
    pub n_nodes: usize,
    pub multiplicity: usize,
    pub lambda: f64,
    /// Distance decays at least as fast as `λ^l`.
    pub distance_bound: bool,
    /// Residual angle at least the plain angle.
    pub residual_angle: bool,
    /// Residual angle nonincreasing in depth.
    pub residual_monotone: bool,
    /// Adaptive angle at least the residual angle, for the prior-mean and a
    /// prior-drawn π.
    pub adaptive_angle: bool,
    /// Representations stop changing once π hits 0.
    pub frozen: bool,
    /// Per-column sampled masks also dominate the residual angle. Reported
    /// only.
    pub sampled_masks: bool,
    pub pi_mean: Vec<f64>,
    pub pi_draw: Vec<f64>,
}

impl TrialChecks {
    pub fn asserted(&self) -> [bool; 5] {
        [
            self.distance_bound,
            self.residual_angle,
            self.residual_monotone,
            self.adaptive_angle,
            self.frozen,
        ]
    }

    pub fn passed(&self) -> bool {
        self.asserted().iter().all(|&b| b)
    }
}

pub const CHECK_NAMES: [&str; 5] = [
    "distance_bound",
    "residual_angle",
    "residual_monotone",
    "adaptive_angle",
    "frozen",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    pub config: TheoryConfig,
    pub rows: Vec<DepthRow>,
    pub trials: Vec<TrialChecks>,
}

fn rate(trials: &[TrialChecks], f: impl Fn(&TrialChecks) -> bool) -> f64 {
    trials.iter().filter(|t| f(t)).count() as f64 / trials.len().max(1) as f64
}

impl PropagationReport {
    /// Pass rate of each asserted check, in [`CHECK_NAMES`] order.
    pub fn pass_rates(&self) -> [f64; 5] {
        std::array::from_fn(|i| rate(&self.trials, |t| t.asserted()[i]))
    }

    pub fn sampled_mask_rate(&self) -> f64 {
        rate(&self.trials, |t| t.sampled_masks)
    }

    pub fn all_passed(&self) -> bool {
        self.trials.iter().all(TrialChecks::passed)
    }

    /// Error listing the failing checks, if any.
    pub fn ensure_passed(&self) -> Result<()> {
        if self.all_passed() {
            return Ok(());
        }
        let failing: Vec<String> = CHECK_NAMES
            .iter()
            .zip(self.pass_rates())
            .filter(|(_, r)| *r < 1.0)
            .map(|(n, r)| format!("{n} pass rate {r:.4}"))
            .collect();
        Err(Error::TheoremCheck(failing.join(", ")))
    }

    /// `trial,depth,variant,d_m,p_norm,theta,degenerate`.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("trial,depth,variant,d_m,p_norm,theta,degenerate\n");
        for r in &self.rows {
            let g = &r.geometry;
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{},{}",
                r.trial, r.depth, r.variant, g.d_m, g.p_norm, g.theta, g.degenerate
            );
        }
        out
    }

    /// One line per trial with every check flag and the π sequences
    /// (semicolon separated).
    pub fn checks_csv(&self) -> String {
        let mut out = String::from("trial,n_nodes,multiplicity,lambda");
        for n in CHECK_NAMES {
            let _ = write!(out, ",{n}");
        }
        out.push_str(",sampled_masks,pi_mean,pi_draw\n");
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for t in &self.trials {
            let _ = write!(out, "{},{},{},{}", t.trial, t.n_nodes, t.multiplicity, t.lambda);
            for b in t.asserted() {
                let _ = write!(out, ",{b}");
            }
            let _ = writeln!(out, ",{},{},{}", t.sampled_masks, join(&t.pi_mean), join(&t.pi_draw));
        }
        out
    }

    /// `key value` summary lines.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "ensemble {}", c.ensemble.describe());
        let _ = writeln!(out, "trials {}", self.trials.len());
        let _ = writeln!(out, "depth {}", c.depth);
        let _ = writeln!(out, "features {}", c.features);
        let _ = writeln!(out, "alpha {}", c.alpha);
        let _ = writeln!(out, "beta {}", c.beta);
        let _ = writeln!(out, "seed {}", c.seed);
        for (n, r) in CHECK_NAMES.iter().zip(self.pass_rates()) {
            let _ = writeln!(out, "pass_rate_{n} {r}");
        }
        let _ = writeln!(out, "sampled_mask_rate {}", self.sampled_mask_rate());
        let _ = writeln!(out, "all_passed {}", self.all_passed());
        out
    }
}

fn geometry_rows(
    trial: usize,
    variant: &'static str,
    h0: &Matrix,
    hs: &[Matrix],
    dec: &SpectralDecomposition,
) -> Result<Vec<DepthRow>> {
    std::iter::once(h0)
        .chain(hs)
        .enumerate()
        .map(|(depth, h)| {
            Ok(DepthRow {
                trial,
                depth,
                variant,
                geometry: subspace_distance_and_angle(h, dec)?,
            })
        })
        .collect()
}

fn dominates(upper: &[DepthRow], lower: &[DepthRow]) -> bool {
    upper
        .iter()
        .zip(lower)
        .all(|(u, l)| u.geometry.theta >= l.geometry.theta - CHECK_TOL)
}

/// Runs every check on one graph with the given initial features and π
/// sequences. `z` holds the per-column masks of the sampled variant.
pub fn check_graph(
    trial: usize,
    adjacency: &Matrix,
    h0: &Matrix,
    pi_mean: &[f64],
    pi_draw: &[f64],
    z: &Matrix,
    freeze_layer: usize,
) -> Result<(TrialChecks, Vec<DepthRow>)> {
    let depth = z.rows();
    let a = spectral_shift(adjacency);
    let dec = eigendecompose(&a)?;
    let lambda = dec.subdominant();

    let gcn = linear_propagate(Propagation::Gcn, &a, h0, depth, None)?;
    let res = linear_propagate(Propagation::Res, &a, h0, depth, None)?;
    let bna_mean = linear_propagate(Propagation::Bna, &a, h0, depth, Some(pi_mean))?;
    let bna_draw = linear_propagate(Propagation::Bna, &a, h0, depth, Some(pi_draw))?;
    let sampled = masked_propagate(&a, h0, z)?;

    let g_gcn = geometry_rows(trial, "gcn", h0, &gcn, &dec)?;
    let g_res = geometry_rows(trial, "res", h0, &res, &dec)?;
    let g_mean = geometry_rows(trial, "bna_mean", h0, &bna_mean, &dec)?;
    let g_draw = geometry_rows(trial, "bna_draw", h0, &bna_draw, &dec)?;
    let g_sampled = geometry_rows(trial, "bna_sampled", h0, &sampled, &dec)?;

    let d0 = g_gcn[0].geometry.d_m;
    let distance_bound = g_gcn
        .iter()
        .all(|r| r.geometry.d_m <= lambda.powi(r.depth as i32) * d0 + BOUND_TOL);
    let residual_angle = dominates(&g_res, &g_gcn);
    let residual_monotone = g_res
        .windows(2)
        .all(|w| w[1].geometry.theta <= w[0].geometry.theta + CHECK_TOL);
    let adaptive_angle = dominates(&g_mean, &g_res) && dominates(&g_draw, &g_res);
    let sampled_masks = dominates(&g_sampled, &g_res);

    let k = freeze_layer.clamp(1, depth);
    let mut pi_frozen = pi_draw.to_vec();
    pi_frozen[k - 1..].iter_mut().for_each(|p| *p = 0.0);
    let hf = linear_propagate(Propagation::Bna, &a, h0, depth, Some(&pi_frozen))?;
    let anchor = if k == 1 { h0 } else { &hf[k - 2] };
    let frozen = hf[k - 1..].iter().all(|h| h == anchor);

    let checks = TrialChecks {
        trial,
        n_nodes: a.rows(),
        multiplicity: dec.multiplicity,
        lambda,
        distance_bound,
        residual_angle,
        residual_monotone,
        adaptive_angle,
        frozen,
        sampled_masks,
        pi_mean: pi_mean.to_vec(),
        pi_draw: pi_draw.to_vec(),
    };
    let rows = [g_gcn, g_res, g_mean, g_draw, g_sampled].concat();
    Ok((checks, rows))
}

fn run_trial(cfg: &TheoryConfig, trial: usize) -> Result<(TrialChecks, Vec<DepthRow>)> {
    let mut rng = substream(cfg.seed, &[tag::TRIAL, trial as u64]);
    let n = cfg.ensemble.n_nodes();
    let edges = cfg.ensemble.sample_edges(&mut rng);
    let adjacency = normalize_adjacency(n, &edges, cfg.normalization).to_dense();
    let h0 = Matrix::from_vec(
        n,
        cfg.features,
        (0..n * cfg.features).map(|_| StandardNormal.sample(&mut rng)).collect(),
    )?;
    let prior = StickBreakingPrior::new(cfg.alpha, cfg.beta)?;
    let pi_mean = prior.expected_sticks(cfg.depth);
    let fractions = Beta::new(cfg.alpha, cfg.beta).map_err(|e| Error::Config(e.to_string()))?;
    let nu: Vec<f64> = (0..cfg.depth).map(|_| fractions.sample(&mut rng)).collect();
    let pi_draw = stick_breaking(&nu)?;
    let mut z = Matrix::zeros(cfg.depth, cfg.features);
    for l in 0..cfg.depth {
        for v in z.row_mut(l) {
            *v = concrete_relaxed(pi_draw[l], cfg.tau, logistic(&mut rng));
        }
    }
    check_graph(trial, &adjacency, &h0, &pi_mean, &pi_draw, &z, cfg.freeze_layer())
}

/// Runs `cfg.trials` independent graphs, split over `jobs` threads. Check
/// failures are recorded in the report rather than returned as errors.
pub fn verify_theorems(cfg: &TheoryConfig, jobs: usize) -> Result<PropagationReport> {
    cfg.validate()?;
    let jobs = jobs.clamp(1, cfg.trials);
    let ids: Vec<usize> = (0..cfg.trials).collect();
    let results: Vec<Result<(TrialChecks, Vec<DepthRow>)>> = if jobs == 1 {
        ids.iter().map(|&t| run_trial(cfg, t)).collect()
    } else {
        let chunk = ids.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = ids
                .chunks(chunk)
                .map(|ts| s.spawn(move || ts.iter().map(|&t| run_trial(cfg, t)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("trial worker panicked"))
                .collect()
        })
    };
    let mut report = PropagationReport {
        config: cfg.clone(),
        rows: Vec::new(),
        trials: Vec::new(),
    };
    for r in results {
        let (checks, rows) = r?;
        report.trials.push(checks);
        report.rows.extend(rows);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2() -> Matrix {
        Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]])
    }

    #[test]
    fn gcn_on_two_node_path() {
        let a = spectral_shift(&path2());
        let h0 = Matrix::from_rows(&[[1.0], [-1.0]]);
        let hs = linear_propagate(Propagation::Gcn, &a, &h0, 2, None).unwrap();
        // [[0.75, 0.25], [0.25, 0.75]] · [1, -1]ᵀ
        assert_eq!(hs[0], Matrix::from_rows(&[[0.5], [-0.5]]));
        assert_eq!(hs[1], Matrix::from_rows(&[[0.25], [-0.25]]));
    }

    #[test]
    fn adaptive_reductions() {
        let a = spectral_shift(&path2());
        let h0 = Matrix::from_rows(&[[1.0, 0.3], [-2.0, 0.7]]);
        let res = linear_propagate(Propagation::Res, &a, &h0, 4, None).unwrap();
        let ones = linear_propagate(Propagation::Bna, &a, &h0, 4, Some(&[1.0; 4])).unwrap();
        assert_eq!(res, ones);
        let zeros = linear_propagate(Propagation::Bna, &a, &h0, 4, Some(&[0.0; 4])).unwrap();
        assert!(zeros.iter().all(|h| *h == h0));
        assert!(linear_propagate(Propagation::Bna, &a, &h0, 4, None).is_err());
        assert!(linear_propagate(Propagation::Bna, &a, &h0, 4, Some(&[1.0; 3])).is_err());
        assert!(linear_propagate(Propagation::Bna, &a, &h0, 1, Some(&[1.5])).is_err());
        assert!(linear_propagate(Propagation::Gcn, &a, &Matrix::zeros(3, 1), 1, None).is_err());
    }

    #[test]
    fn masked_with_uniform_columns_matches_linear() {
        let a = spectral_shift(&path2());
        let h0 = Matrix::from_rows(&[[1.0, 0.3], [-2.0, 0.7]]);
        let pi = [0.9, 0.5, 0.2];
        let z = Matrix::from_rows(&[[0.9, 0.9], [0.5, 0.5], [0.2, 0.2]]);
        let a_lin = linear_propagate(Propagation::Bna, &a, &h0, 3, Some(&pi)).unwrap();
        let a_mask = masked_propagate(&a, &h0, &z).unwrap();
        for (x, y) in a_lin.iter().zip(&a_mask) {
            assert!(x.max_abs_diff(y) < 1e-15);
        }
    }

    #[test]
    fn distance_bound_tight_on_subdominant_eigenvector() {
        let edges = erdos_renyi_edges(20, 0.2, &mut substream(4, &[]));
        let a = spectral_shift(&normalize_adjacency(20, &edges, Normalization::Symmetric).to_dense());
        let dec = eigendecompose(&a).unwrap();
        let idx = dec.n() - dec.multiplicity - 1;
        let lambda = dec.eigenvalues[idx];
        assert_eq!(lambda, dec.subdominant());
        let h0 = Matrix::from_vec(20, 1, dec.eigenvectors.column(idx)).unwrap();
        let d0 = subspace_distance_and_angle(&h0, &dec).unwrap().d_m;
        let hs = linear_propagate(Propagation::Gcn, &a, &h0, 15, None).unwrap();
        for (l, h) in hs.iter().enumerate() {
            let d = subspace_distance_and_angle(h, &dec).unwrap().d_m;
            assert!((d - lambda.powi(l as i32 + 1) * d0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_node_graph_passes_trivially() {
        let cfg = TheoryConfig {
            ensemble: Ensemble::ErdosRenyi { n: 1, p: 0.5 },
            trials: 3,
            depth: 5,
            ..TheoryConfig::default()
        };
        let r = verify_theorems(&cfg, 1).unwrap();
        assert!(r.all_passed());
        assert!(r.rows.iter().all(|row| row.geometry.theta == 0.0));
    }

    #[test]
    fn default_ensemble_passes_everything() {
        let r = verify_theorems(&TheoryConfig::default(), 4).unwrap();
        assert_eq!(r.trials.len(), 100);
        assert_eq!(r.pass_rates(), [1.0; 5]);
        assert!(r.ensure_passed().is_ok());
        assert_eq!(r.rows.len(), 100 * 5 * 21);
        assert!(r
            .rows
            .iter()
            .all(|row| row.geometry.d_m >= 0.0 && (0.0..=std::f64::consts::FRAC_PI_2).contains(&row.geometry.theta)));
    }

    #[test]
    fn sbm_ensemble_and_job_count_invariance() {
        let cfg = TheoryConfig {
            ensemble: Ensemble::parse("sbm:10/10/10:0.4:0.02").unwrap(),
            trials: 6,
            depth: 8,
            ..TheoryConfig::default()
        };
        let a = verify_theorems(&cfg, 1).unwrap();
        let b = verify_theorems(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.all_passed());
        assert_eq!(a.checks_csv().lines().count(), 7);
        assert!(a.summary().contains("all_passed true"));
    }

    #[test]
    fn broken_operator_is_caught() {
        // An operator with eigenvalue above the top of U breaks the distance
        // bound; the harness must notice rather than pass it.
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.5]]);
        let h0 = Matrix::from_rows(&[[1.0], [1.0]]);
        let z = Matrix::filled(3, 1, 0.5);
        let (ok, _) = check_graph(0, &a, &h0, &[0.7, 0.5, 0.3], &[0.7, 0.5, 0.3], &z, 2).unwrap();
        assert!(ok.passed());
        let bad = Matrix::from_rows(&[[3.0, 0.0], [0.0, 1.0]]);
        let (checks, _) = check_graph(0, &bad, &h0, &[0.7, 0.5, 0.3], &[0.7, 0.5, 0.3], &z, 2).unwrap();
        assert!(!checks.passed());
    }

    #[test]
    fn ensemble_parsing() {
        assert_eq!(Ensemble::parse("er:30:0.2").unwrap(), Ensemble::ErdosRenyi { n: 30, p: 0.2 });
        assert!(Ensemble::parse("er:300:0.2").is_err());
        assert!(Ensemble::parse("er:30:1.2").is_err());
        assert!(Ensemble::parse("ws:30:0.2").is_err());
        assert!(Ensemble::parse("sbm:10/0:0.4:0.1").is_err());
    }
}
