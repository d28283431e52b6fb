//! C interface to `bna`.
//!
//! Every function returns a [`BnaStatus`]. On failure the message is kept in
//! a thread-local buffer readable with [`bna_last_error_message`]. Handles are
//! created by the library and must be released with the matching `_free`
//! function. Settings strings are `key=value` pairs separated by `;` or
//! newlines, and may be null for defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bna::cli::DataSource;
use bna::graph::{DatasetPaths, Graph};
use bna::model::{Backbone, Checkpoint};
use bna::process::VariationalPosterior;
use bna::theory::{self, Ensemble, TheoryConfig};
use bna::train::{self, TrainConfig};
use bna::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Validation = 4,
    Numeric = 5,
    TheoremCheck = 6,
    Panic = 7,
}

/// A loaded dataset.
pub struct BnaGraph {
    graph: Graph,
}

/// Trained weights, posterior and configuration.
pub struct BnaModel {
    checkpoint: Checkpoint,
    test_accuracy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> BnaStatus {
    match err {
        Error::Config(_) => BnaStatus::InvalidArgument,
        Error::Io { .. } => BnaStatus::Io,
        Error::NonFinite { .. } | Error::Domain { .. } => BnaStatus::Numeric,
        Error::TheoremCheck(_) => BnaStatus::TheoremCheck,
        _ => BnaStatus::Validation,
    }
}

enum Failure {
    Status(BnaStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BnaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BnaStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            BnaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(BnaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(BnaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn parse_settings(p: *const c_char) -> Result<Vec<(String, String)>, Failure> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    let text = str_arg(p, "settings")?;
    text.split([';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::Status(BnaStatus::InvalidArgument, format!("'{pair}' is not key=value")))
        })
        .collect()
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bna_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a dataset directory (edges.tsv, features.csv, labels.csv,
/// masks.txt).
///
/// # Safety
/// `dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_graph_load(dir: *const c_char, out: *mut *mut BnaGraph) -> BnaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let graph = DatasetPaths::in_dir(dir).load()?;
        *out = Box::into_raw(Box::new(BnaGraph { graph }));
        Ok(())
    })
}

/// Generates a synthetic dataset: `name` is `sbm` or `citation`.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_graph_synthetic(name: *const c_char, seed: u64, out: *mut *mut BnaGraph) -> BnaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let name = str_arg(name, "name")?.to_string();
        let graph = DataSource::Synthetic { name, seed }.load()?;
        *out = Box::into_raw(Box::new(BnaGraph { graph }));
        Ok(())
    })
}

/// Node, feature and class counts of a graph.
///
/// # Safety
/// `graph` must come from this library; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn bna_graph_shape(
    graph: *const BnaGraph,
    nodes: *mut usize,
    features: *mut usize,
    classes: *mut usize,
) -> BnaStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.graph;
        for (p, v) in [(nodes, g.n_nodes()), (features, g.n_features()), (classes, g.num_classes())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bna_graph_free(graph: *mut BnaGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Trains a model with the given settings (any training key, e.g.
/// `epochs=200;backbone=bna;seed=1`).
///
/// # Safety
/// `graph` must come from this library, `settings` must be null or a valid C
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_train(
    graph: *const BnaGraph,
    settings: *const c_char,
    out: *mut *mut BnaModel,
) -> BnaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.graph;
        let mut cfg = TrainConfig::default();
        for (k, v) in parse_settings(settings)? {
            cfg.set(&k, &v)?;
        }
        let outcome = train::train(g, &cfg)?;
        let probs = train::evaluate(g, &outcome.params, &outcome.posterior, &cfg)?;
        let test = &g.splits().test;
        let test_accuracy = if test.is_empty() {
            f64::NAN
        } else {
            bna::metrics::accuracy(&probs, test, &g.labels_of(test))?
        };
        *out = Box::into_raw(Box::new(BnaModel {
            checkpoint: outcome.checkpoint(&cfg),
            test_accuracy,
        }));
        Ok(())
    })
}

/// Test accuracy measured right after training; NaN for loaded models.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_model_test_accuracy(model: *const BnaModel, out: *mut f64) -> BnaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_ptr(out, "out")? = m.test_accuracy;
        Ok(())
    })
}

/// Number of classes the model predicts.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_model_num_classes(model: *const BnaModel, out: *mut usize) -> BnaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_ptr(out, "out")? = m.checkpoint.params.n_classes();
        Ok(())
    })
}

/// Writes class probabilities for every node, row-major, into `probs`, which
/// must hold exactly nodes × classes values. Uses the evaluation stream of
/// the model's seed, so results match the accuracy reported at training.
///
/// # Safety
/// Handles must come from this library and `probs` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bna_predict(
    model: *const BnaModel,
    graph: *const BnaGraph,
    probs: *mut f64,
    len: usize,
) -> BnaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.graph;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let ckpt = &m.checkpoint;
        if ckpt.params.n_features() != g.n_features() || ckpt.params.n_classes() != g.num_classes() {
            return Err(Failure::Status(
                BnaStatus::Validation,
                format!(
                    "model expects {} features and {} classes, graph has {} and {}",
                    ckpt.params.n_features(),
                    ckpt.params.n_classes(),
                    g.n_features(),
                    g.num_classes()
                ),
            ));
        }
        let expected = g.n_nodes() * g.num_classes();
        if len != expected {
            return Err(Failure::Status(
                BnaStatus::InvalidArgument,
                format!("buffer holds {len} values, need {expected}"),
            ));
        }
        let cfg = TrainConfig::from_map(&ckpt.config)?;
        let posterior = match (&ckpt.posterior, ckpt.backbone) {
            (Some(p), _) => p.clone(),
            (None, Backbone::Bna) => return Err(Failure::Status(BnaStatus::Validation, "model has no posterior".into())),
            (None, _) => VariationalPosterior::new(&[1.0], &[1.0], cfg.tau)?,
        };
        let p = train::evaluate(g, &ckpt.params, &posterior, &cfg)?;
        std::slice::from_raw_parts_mut(probs, len).copy_from_slice(p.as_slice());
        Ok(())
    })
}

/// Saves a model as a text checkpoint.
///
/// # Safety
/// `model` must come from this library and `path` be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn bna_model_save(model: *const BnaModel, path: *const c_char) -> BnaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.checkpoint.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Loads a checkpoint written by [`bna_model_save`] or the command-line tool.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_model_load(path: *const c_char, out: *mut *mut BnaModel) -> BnaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let checkpoint = Checkpoint::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(BnaModel {
            checkpoint,
            test_accuracy: f64::NAN,
        }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bna_model_free(model: *mut BnaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the linearized oversmoothing checks. Keys: `ensemble` (`er:N:P` or
/// `sbm:S1/S2:P_IN:P_OUT`), `trials`, `depth`, `features`, `alpha`, `beta`,
/// `seed`, `jobs`. `all_passed` receives the verdict; a failed check also
/// returns [`BnaStatus::TheoremCheck`].
///
/// # Safety
/// `settings` must be null or a valid C string and `all_passed` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn bna_verify_theory(settings: *const c_char, all_passed: *mut bool) -> BnaStatus {
    guard(|| {
        let verdict = out_ptr(all_passed, "all_passed")?;
        let mut cfg = TheoryConfig::default();
        let mut jobs = 1usize;
        for (k, v) in parse_settings(settings)? {
            let bad = || Failure::Status(BnaStatus::InvalidArgument, format!("{k}: cannot parse '{v}'"));
            match k.as_str() {
                "ensemble" => cfg.ensemble = Ensemble::parse(&v)?,
                "trials" => cfg.trials = v.parse().map_err(|_| bad())?,
                "depth" => cfg.depth = v.parse().map_err(|_| bad())?,
                "features" => cfg.features = v.parse().map_err(|_| bad())?,
                "alpha" => cfg.alpha = v.parse().map_err(|_| bad())?,
                "beta" => cfg.beta = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                "jobs" => jobs = v.parse().map_err(|_| bad())?,
                _ => return Err(Failure::Status(BnaStatus::InvalidArgument, format!("unknown key '{k}'"))),
            }
        }
        let report = theory::verify_theorems(&cfg, jobs)?;
        *verdict = report.all_passed();
        report.ensure_passed()?;
        Ok(())
    })
}

/// Revision of this interface.
#[no_mangle]
pub extern "C" fn bna_abi_version() -> u32 {
    1
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn error_buffer_resets_on_success() {
        let mut g: *mut BnaGraph = ptr::null_mut();
        let s = unsafe { bna_graph_synthetic(c"nope".as_ptr(), 0, &mut g) };
        assert_eq!(s, BnaStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(bna_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("nope"));
        let s = unsafe { bna_graph_synthetic(c"sbm".as_ptr(), 0, &mut g) };
        assert_eq!(s, BnaStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(bna_last_error_message()) }.to_bytes(), b"");
        unsafe { bna_graph_free(g) };
    }

    #[test]
    fn settings_parsing() {
        let parsed = unsafe { parse_settings(c"epochs=3; hidden = 8\nseed=1;".as_ptr()) }.ok().unwrap();
        assert_eq!(parsed.len(), 3);
        assert!(unsafe { parse_settings(c"epochs".as_ptr()) }.is_err());
        assert!(unsafe { parse_settings(ptr::null()) }.ok().unwrap().is_empty());
    }
}
