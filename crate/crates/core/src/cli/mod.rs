//! The `bna` command-line tool.
//!
//! Settings resolve as flags over config-file values over built-in
//! defaults. Every command writes its files into one output directory and
//! lists them with SHA-256 digests in `manifest.txt`.

pub mod dataset;
pub mod settings;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{write_dataset, DatasetPaths, Graph};
use crate::metrics::{self, CalibrationReport};
use crate::model::{self, Backbone, Checkpoint};
use crate::process::VariationalPosterior;
use crate::rng::{derive_seed, substream, tag, BnaRng};
use crate::theory::{self, Ensemble, TheoryConfig, VARIANTS};
use crate::train::{self, parse_grid, sweep, sweep_table, TrainConfig, CONFIG_KEYS};

pub use dataset::{convert_linqs, planetoid_split, DataSource, SplitSpec, CACHE_ENV};
pub use settings::{ConfigFile, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_THEOREM: i32 = 5;

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite { .. } | Error::Domain { .. } => EXIT_NUMERIC,
        Error::TheoremCheck(_) => EXIT_THEOREM,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Parser, Debug)]
#[command(name = "bna", version, about = "Bayesian neighborhood adaptation for graph neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoint, history and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write calibration reports.
    Eval(EvalArgs),
    /// Train every point of a hyperparameter grid.
    Sweep(SweepArgs),
    /// Check the oversmoothing inequalities on random graphs.
    VerifyTheory(TheoryArgs),
    /// Convert a LINQS citation dump into the dataset layout.
    ConvertDataset(ConvertArgs),
    /// Write final-layer node representations of a checkpoint as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Config file with `key = value` lines and `[command]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any setting as KEY=VALUE; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// Dataset directory (edges.tsv, features.csv, labels.csv, masks.txt).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generated dataset instead of a directory: sbm or citation.
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Seed of the generated dataset.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// bna, gcn or resgcn.
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Monte-Carlo samples per training step.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo samples at evaluation.
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Truncation level T.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropedge: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

impl ModelFlags {
    fn apply(&self, s: &mut Settings) {
        s.flag("seed", self.seed);
        s.flag("epochs", self.epochs);
        s.flag("backbone", self.backbone.as_ref());
        s.flag("lr", self.lr);
        s.flag("samples", self.samples);
        s.flag("eval_samples", self.eval_samples);
        s.flag("alpha", self.alpha);
        s.flag("beta", self.beta);
        s.flag("truncation", self.truncation);
        s.flag("hidden", self.hidden);
        s.flag("dropedge", self.dropedge);
        s.flag("dropout", self.dropout);
    }
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Monte-Carlo samples at evaluation.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sampled, expected or hard.
    #[arg(long)]
    pub eval_policy: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Grid such as "alpha=2,5,10 beta=2,4 S=1,5".
    #[arg(long)]
    pub grid: Option<String>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// er:N:P or sbm:S1/S2/..:P_IN:P_OUT.
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Propagation depth L.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Columns of the random initial features.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write mean per-depth distance and angle for every variant.
    #[arg(long)]
    pub export_curves: bool,
}

#[derive(Args, Debug, Default)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Node rows: id, features, class.
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Citation pairs.
    #[arg(long)]
    pub cites: Option<PathBuf>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Seed of the split.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Messages go to stderr, results to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(lines) => {
            print!("{lines}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command and returns its stdout text.
pub fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VerifyTheory(a) => cmd_verify_theory(a),
        Command::ConvertDataset(a) => cmd_convert(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
    }
}

fn settings_for(common: &CommonArgs, command: &str) -> Result<Settings> {
    let file = common.config.as_deref().map(ConfigFile::load).transpose()?;
    let mut s = Settings::new(file.as_ref(), command);
    s.overrides(&common.set)?;
    s.flag("out", common.out.as_ref().map(|p| p.display()));
    Ok(s)
}

fn data_flags(data: &DataArgs, s: &mut Settings) {
    s.flag("data", data.data.as_ref().map(|p| p.display()));
    s.flag("synthetic", data.synthetic.as_ref());
    s.flag("data_seed", data.data_seed);
}

fn take_source(s: &mut Settings) -> Result<DataSource> {
    let dir = s.take("data");
    let synthetic = s.take("synthetic");
    let seed = s.take_parsed("data_seed")?.unwrap_or(0);
    match (dir, synthetic) {
        (Some(d), None) => Ok(DataSource::Dir(PathBuf::from(d))),
        (None, Some(name)) => Ok(DataSource::Synthetic { name, seed }),
        (Some(_), Some(_)) => Err(Error::Config("give either data or synthetic, not both".into())),
        (None, None) => Err(Error::Config("no dataset: set data (a directory) or synthetic".into())),
    }
}

fn take_out(s: &mut Settings, default: &str) -> PathBuf {
    PathBuf::from(s.take("out").unwrap_or_else(|| default.to_string()))
}

/// Applies every remaining config key to `base`.
fn take_train_config(s: &mut Settings, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    for (k, v) in s.drain_matching(|k| CONFIG_KEYS.contains(&k) || k == "S" || k == "T") {
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Collects written files and emits the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.record(name, contents.as_bytes());
        Ok(path)
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), hex));
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.files.sort();
        let text: String = self.files.iter().map(|(n, h)| format!("{h}  {n}\n")).collect();
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
}

/// Reads a `key value` file such as `metrics.kv`.
pub fn parse_kv(text: &str) -> std::collections::BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn cmd_train(a: TrainArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "train")?;
    data_flags(&a.data, &mut s);
    a.model.apply(&mut s);
    let source = take_source(&mut s)?;
    let out_dir = take_out(&mut s, "bna-run");
    let cfg = take_train_config(&mut s, TrainConfig::default())?;
    s.finish()?;

    let graph = source.load()?;
    log::info!("training {} on {}", cfg.backbone.name(), source.describe());
    let outcome = train::train(&graph, &cfg)?;
    let probs = train::evaluate(&graph, &outcome.params, &outcome.posterior, &cfg)?;
    let test = &graph.splits().test;
    let labels = graph.labels_of(test);
    let report = CalibrationReport::build(&probs, test, &labels, metrics::DEFAULT_BINS)?;
    let lns_mode = outcome.history.records()[outcome.best_epoch - 1].lns_mode;

    let mut out = Outputs::create(&out_dir)?;
    let ckpt = outcome.checkpoint(&cfg).to_text();
    out.write("checkpoint.bna", &ckpt)?;
    out.write("history.csv", &outcome.history.to_csv())?;
    out.write(
        "metrics.kv",
        &kv(&[
            ("dataset", source.describe()),
            ("backbone", cfg.backbone.name().to_string()),
            ("seed", cfg.seed.to_string()),
            ("test_accuracy", report.accuracy.to_string()),
            ("test_ece", report.ece.to_string()),
            ("test_mean_pavspu", report.mean_pavspu().to_string()),
            ("val_accuracy", outcome.best_val_acc.to_string()),
            ("val_loss", outcome.best_val_loss.to_string()),
            ("best_epoch", outcome.best_epoch.to_string()),
            ("epochs_run", outcome.history.records().len().to_string()),
            ("lns_mode", lns_mode.to_string()),
        ]),
    )?;
    out.finish()?;
    Ok(format!("test_accuracy {:.4}\nlns_mode {lns_mode}\n", report.accuracy))
}

fn load_checkpoint(path: Option<PathBuf>, s: &mut Settings) -> Result<(PathBuf, Checkpoint)> {
    let path = path
        .or_else(|| s.take("checkpoint").map(PathBuf::from))
        .ok_or_else(|| Error::Config("no checkpoint given".into()))?;
    let ckpt = Checkpoint::load(&path)?;
    Ok((path, ckpt))
}

/// Checks that `ckpt` fits `graph` and returns its config with overrides
/// from `s` applied.
fn checkpoint_config(
    ckpt: &Checkpoint,
    path: &Path,
    graph: &Graph,
    s: &mut Settings,
) -> Result<(TrainConfig, VariationalPosterior)> {
    let (f, c) = (ckpt.params.n_features(), ckpt.params.n_classes());
    if f != graph.n_features() || c != graph.num_classes() {
        return Err(Error::invalid(
            path,
            None,
            format!(
                "checkpoint expects {f} features and {c} classes, dataset has {} and {}",
                graph.n_features(),
                graph.num_classes()
            ),
        ));
    }
    let base = TrainConfig::from_map(&ckpt.config)?;
    let cfg = take_train_config(s, base)?;
    let posterior = match (&ckpt.posterior, ckpt.backbone) {
        (Some(p), _) => p.clone(),
        (None, Backbone::Bna) => return Err(Error::Checkpoint("adaptive checkpoint without posterior".into())),
        (None, _) => VariationalPosterior::new(&[1.0], &[1.0], cfg.tau)?,
    };
    Ok((cfg, posterior))
}

fn cmd_eval(a: EvalArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "eval")?;
    data_flags(&a.data, &mut s);
    s.flag("eval_samples", a.samples);
    s.flag("seed", a.seed);
    s.flag("eval_policy", a.eval_policy.as_ref());
    let (path, ckpt) = load_checkpoint(a.checkpoint, &mut s)?;
    let source = take_source(&mut s)?;
    let out_dir = take_out(&mut s, "bna-eval");
    let graph = source.load()?;
    let (cfg, posterior) = checkpoint_config(&ckpt, &path, &graph, &mut s)?;
    s.finish()?;

    let probs = train::evaluate(&graph, &ckpt.params, &posterior, &cfg)?;
    let test = &graph.splits().test;
    let labels = graph.labels_of(test);
    let report = CalibrationReport::build(&probs, test, &labels, metrics::DEFAULT_BINS)?;
    let mut entropy_csv = String::from("node,split,entropy\n");
    let split_of = |i: usize| {
        let sp = graph.splits();
        if sp.train.binary_search(&i).is_ok() {
            "train"
        } else if sp.val.binary_search(&i).is_ok() {
            "val"
        } else if sp.test.binary_search(&i).is_ok() {
            "test"
        } else {
            "none"
        }
    };
    for (i, h) in report.entropy.iter().enumerate() {
        let _ = writeln!(entropy_csv, "{i},{},{h}", split_of(i));
    }
    let test_entropy = test.iter().map(|&i| report.entropy[i]).sum::<f64>() / test.len().max(1) as f64;

    let mut out = Outputs::create(&out_dir)?;
    out.write(
        "metrics.kv",
        &kv(&[
            ("dataset", source.describe()),
            ("backbone", cfg.backbone.name().to_string()),
            ("eval_samples", cfg.eval_samples.to_string()),
            ("seed", cfg.seed.to_string()),
            ("test_nodes", test.len().to_string()),
            ("accuracy", report.accuracy.to_string()),
            ("ece", report.ece.to_string()),
            ("mean_pavspu", report.mean_pavspu().to_string()),
            ("mean_test_entropy", test_entropy.to_string()),
        ]),
    )?;
    out.write("calibration_bins.csv", &report.bins_csv())?;
    out.write("pavspu_curve.csv", &report.curve_csv())?;
    out.write("entropy.csv", &entropy_csv)?;
    out.finish()?;
    Ok(format!("accuracy {:.4}\nece {:.4}\n", report.accuracy, report.ece))
}

fn cmd_sweep(a: SweepArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "sweep")?;
    data_flags(&a.data, &mut s);
    a.model.apply(&mut s);
    s.flag("grid", a.grid.as_ref());
    s.flag("jobs", a.jobs);
    let source = take_source(&mut s)?;
    let out_dir = take_out(&mut s, "bna-sweep");
    let grid_text = s.take("grid").ok_or_else(|| Error::Config("no grid given".into()))?;
    let jobs: usize = s.take_parsed("jobs")?.unwrap_or(1);
    let grid = parse_grid(&grid_text)?;
    let base = take_train_config(&mut s, TrainConfig::default())?;
    s.finish()?;

    let graph = source.load()?;
    log::info!("sweeping {} points on {}", grid.points().len(), source.describe());
    let rows = sweep(&graph, &base, &grid, jobs);
    let mut out = Outputs::create(&out_dir)?;
    out.write("sweep.tsv", &sweep_table(&grid, &rows))?;
    for r in &rows {
        let name: Vec<String> = r.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut lines: Vec<(&str, String)> = r.point.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        match &r.result {
            Ok(m) => lines.extend([
                ("val_accuracy", m.val_acc.to_string()),
                ("test_accuracy", m.test_acc.to_string()),
                ("test_ece", m.test_ece.to_string()),
                ("best_epoch", m.best_epoch.to_string()),
                ("epochs_run", m.epochs_run.to_string()),
            ]),
            Err(e) => lines.push(("error", e.replace('\n', " "))),
        }
        out.write(&format!("points/{}/metrics.kv", name.join("_")), &kv(&lines))?;
    }
    out.finish()?;
    let best = rows
        .first()
        .filter(|r| r.result.is_ok())
        .ok_or_else(|| Error::State("every grid point failed".into()))?;
    let m = best.result.as_ref().expect("filtered");
    let point: Vec<String> = best.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!(
        "best {} val_accuracy {:.4} test_accuracy {:.4}\n",
        point.join(" "),
        m.val_acc,
        m.test_acc
    ))
}

fn cmd_verify_theory(a: TheoryArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "verify-theory")?;
    s.flag("ensemble", a.ensemble.as_ref());
    s.flag("depth", a.depth);
    s.flag("trials", a.trials);
    s.flag("features", a.features);
    s.flag("alpha", a.alpha);
    s.flag("beta", a.beta);
    s.flag("seed", a.seed);
    s.flag("jobs", a.jobs);
    if a.export_curves {
        s.flag("export_curves", Some(true));
    }
    let mut cfg = TheoryConfig::default();
    if let Some(e) = s.take("ensemble") {
        cfg.ensemble = Ensemble::parse(&e)?;
    }
    cfg.depth = s.take_parsed("depth")?.unwrap_or(cfg.depth);
    cfg.trials = s.take_parsed("trials")?.unwrap_or(cfg.trials);
    cfg.features = s.take_parsed("features")?.unwrap_or(cfg.features);
    cfg.alpha = s.take_parsed("alpha")?.unwrap_or(cfg.alpha);
    cfg.beta = s.take_parsed("beta")?.unwrap_or(cfg.beta);
    cfg.tau = s.take_parsed("tau")?.unwrap_or(cfg.tau);
    cfg.seed = s.take_parsed("seed")?.unwrap_or(cfg.seed);
    if let Some(n) = s.take("normalization") {
        cfg.normalization = crate::graph::Normalization::parse(&n)
            .ok_or_else(|| Error::Config(format!("unknown normalization '{n}'")))?;
    }
    let jobs: usize = s.take_parsed("jobs")?.unwrap_or(1);
    let curves = s.take_flag("export_curves")?;
    let out_dir = take_out(&mut s, "bna-theory");
    s.finish()?;
    cfg.validate()?;

    let report = theory::verify_theorems(&cfg, jobs)?;
    let mut out = Outputs::create(&out_dir)?;
    out.write("theory_rows.csv", &report.rows_csv())?;
    out.write("theory_checks.csv", &report.checks_csv())?;
    out.write("theory_summary.kv", &report.summary())?;
    if curves {
        out.write("theta_curves.csv", &theta_curves(&report))?;
    }
    out.finish()?;
    report.ensure_passed()?;
    Ok(report.summary())
}

/// Mean distance and angle over trials, one row per (variant, depth ≥ 1).
fn theta_curves(report: &theory::PropagationReport) -> String {
    let depth = report.config.depth;
    let mut out = String::from("variant,depth,mean_d_m,mean_p_norm,mean_theta\n");
    for v in VARIANTS {
        for l in 1..=depth {
            let rows: Vec<_> = report.rows.iter().filter(|r| r.variant == v && r.depth == l).collect();
            let n = rows.len().max(1) as f64;
            let mean = |f: &dyn Fn(&theory::SubspaceGeometry) -> f64| rows.iter().map(|r| f(&r.geometry)).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "{v},{l},{:e},{:e},{}",
                mean(&|g| g.d_m),
                mean(&|g| g.p_norm),
                mean(&|g| g.theta)
            );
        }
    }
    out
}

fn cmd_convert(a: ConvertArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "convert-dataset")?;
    s.flag("content", a.content.as_ref().map(|p| p.display()));
    s.flag("cites", a.cites.as_ref().map(|p| p.display()));
    s.flag("train_per_class", a.train_per_class);
    s.flag("val", a.val);
    s.flag("test", a.test);
    s.flag("seed", a.seed);
    let content = s.take("content").ok_or_else(|| Error::Config("no content file given".into()))?;
    let cites = s.take("cites").ok_or_else(|| Error::Config("no cites file given".into()))?;
    let d = SplitSpec::default();
    let split = SplitSpec {
        train_per_class: s.take_parsed("train_per_class")?.unwrap_or(d.train_per_class),
        val: s.take_parsed("val")?.unwrap_or(d.val),
        test: s.take_parsed("test")?.unwrap_or(d.test),
    };
    let seed = s.take_parsed("seed")?.unwrap_or(0);
    let out_dir = take_out(&mut s, "bna-dataset");
    s.finish()?;

    let conv = convert_linqs(Path::new(&content), Path::new(&cites), split, seed)?;
    let out = Outputs::create(&out_dir)?;
    let paths = DatasetPaths::in_dir(&out_dir);
    write_dataset(&conv.graph, &paths)?;
    let mut out = out;
    for p in [&paths.edges, &paths.features, &paths.labels, &paths.masks] {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let name = p.file_name().expect("file path").to_string_lossy().to_string();
        out.record(&name, &bytes);
    }
    let mut classes = String::new();
    for (i, c) in conv.classes.iter().enumerate() {
        let _ = writeln!(classes, "{i},{c}");
    }
    out.write("classes.csv", &classes)?;
    let ids: String = conv.ids.iter().enumerate().map(|(i, id)| format!("{i},{id}\n")).collect();
    out.write("node_ids.csv", &ids)?;
    out.finish()?;
    let g = &conv.graph;
    Ok(format!(
        "nodes {}\nedges {}\nfeatures {}\nclasses {}\ndropped_citations {}\n",
        g.n_nodes(),
        g.edges().len(),
        g.n_features(),
        g.num_classes(),
        conv.dropped_edges
    ))
}

fn cmd_export(a: ExportArgs) -> Result<String> {
    let mut s = settings_for(&a.common, "export-embeddings")?;
    data_flags(&a.data, &mut s);
    let (path, ckpt) = load_checkpoint(a.checkpoint, &mut s)?;
    let source = take_source(&mut s)?;
    let out_dir = take_out(&mut s, "bna-embeddings");
    let graph = source.load()?;
    let (cfg, posterior) = checkpoint_config(&ckpt, &path, &graph, &mut s)?;
    s.finish()?;

    let graph = graph.with_normalization(cfg.normalization);
    let mask = match cfg.backbone {
        Backbone::Bna => Some(model::eval_mask(
            &posterior,
            cfg.eval_policy,
            ckpt.params.hidden(),
            cfg.threshold,
            &mut substream(derive_seed(cfg.seed, &[tag::EVAL]), &[]),
        )?),
        _ => None,
    };
    let trace =
        model::forward_model::<BnaRng>(graph.adjacency(), graph.features(), &ckpt.params, cfg.backbone, mask.as_ref(), None)?;
    let h = trace.hidden.last().expect("projection output present");
    let mut csv = String::from("node,label");
    for d in 1..=h.cols() {
        let _ = write!(csv, ",h_{d}");
    }
    csv.push('\n');
    for i in 0..h.rows() {
        let label = graph.labels()[i].map(|c| c.to_string()).unwrap_or_default();
        let _ = write!(csv, "{i},{label}");
        for v in h.row(i) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let mut out = Outputs::create(&out_dir)?;
    out.write("embeddings.csv", &csv)?;
    out.finish()?;
    Ok(format!(
        "nodes {}\ndims {}\nlayers {}\n",
        h.rows(),
        h.cols(),
        trace.hidden.len() - 1
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::TheoremCheck("x".into())), EXIT_THEOREM);
        assert_eq!(
            exit_code(&Error::NonFinite {
                epoch: 1,
                breakdown: String::new()
            }),
            EXIT_NUMERIC
        );
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), EXIT_VALIDATION);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["bna", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["bna", "verify-theory", "--trials", "0", "--out", "/nonexistent/never"]), EXIT_USAGE);
        assert_eq!(run(["bna", "train"]), EXIT_USAGE);
        assert_eq!(run(["bna", "sweep", "--synthetic", "sbm", "--grid", "alpha"]), EXIT_USAGE);
        assert_eq!(run(["bna", "--help"]), EXIT_OK);
    }

    #[test]
    fn manifest_lists_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::create(dir.path()).unwrap();
        out.write("b.txt", "abc").unwrap();
        out.write("a.txt", "").unwrap();
        let m = std::fs::read_to_string(out.finish().unwrap()).unwrap();
        assert_eq!(
            m,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  a.txt\n\
             ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  b.txt\n"
        );
    }
}
