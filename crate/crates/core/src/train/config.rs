use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Normalization;
use crate::model::{Backbone, EvalMaskPolicy, DEFAULT_HIDDEN, DEFAULT_THRESHOLD};
use crate::process::{KlNuMethod, DEFAULT_TAU};

/// Multiplier on the KL terms of the negative ELBO.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KlScale {
    /// `1 / |train mask|`, so both terms are per labeled node.
    #[default]
    PerTrainNode,
    /// The unscaled bound.
    Unit,
    /// KL terms dropped; likelihood only.
    Off,
}

impl KlScale {
    pub fn factor(self, train_nodes: usize) -> f64 {
        match self {
            KlScale::PerTrainNode => 1.0 / train_nodes.max(1) as f64,
            KlScale::Unit => 1.0,
            KlScale::Off => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KlScale::PerTrainNode => "train",
            KlScale::Unit => "unit",
            KlScale::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" | "per-train" => Some(KlScale::PerTrainNode),
            "unit" | "1" => Some(KlScale::Unit),
            "off" | "0" => Some(KlScale::Off),
            _ => None,
        }
    }
}

fn kl_method_name(m: KlNuMethod) -> String {
    match m {
        KlNuMethod::Quadrature => "quadrature".into(),
        KlNuMethod::Taylor { terms } => format!("taylor:{terms}"),
    }
}

fn parse_kl_method(s: &str) -> Option<KlNuMethod> {
    if s == "quadrature" {
        return Some(KlNuMethod::Quadrature);
    }
    let terms = s.strip_prefix("taylor:")?.parse().ok()?;
    Some(KlNuMethod::Taylor { terms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub dropout: f64,
    pub dropedge: f64,
    /// Monte-Carlo samples per training step.
    pub samples: usize,
    /// Monte-Carlo samples for validation and test predictions.
    pub eval_samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub truncation: usize,
    pub tau: f64,
    pub hidden: usize,
    /// Depth of the baseline stacks after the input projection.
    pub layers: usize,
    pub kl_scale: KlScale,
    pub kl_method: KlNuMethod,
    pub backbone: Backbone,
    pub eval_policy: EvalMaskPolicy,
    pub threshold: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            patience: 100,
            lr: 1e-2,
            dropout: 0.5,
            dropedge: 0.1,
            samples: 5,
            eval_samples: 5,
            alpha: 5.0,
            beta: 2.0,
            truncation: 10,
            tau: DEFAULT_TAU,
            hidden: DEFAULT_HIDDEN,
            layers: 1,
            kl_scale: KlScale::PerTrainNode,
            kl_method: KlNuMethod::Quadrature,
            backbone: Backbone::Bna,
            eval_policy: EvalMaskPolicy::Sampled,
            threshold: DEFAULT_THRESHOLD,
            normalization: Normalization::Symmetric,
            seed: 0,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`].
pub const KEYS: &[&str] = &[
    "epochs",
    "patience",
    "lr",
    "dropout",
    "dropedge",
    "samples",
    "eval_samples",
    "alpha",
    "beta",
    "truncation",
    "tau",
    "hidden",
    "layers",
    "kl_scale",
    "kl_method",
    "backbone",
    "eval_policy",
    "threshold",
    "normalization",
    "seed",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.samples == 0 || self.eval_samples == 0 {
            return fail("sample counts must be at least 1".into());
        }
        if self.truncation == 0 {
            return fail("truncation must be at least 1".into());
        }
        if self.hidden == 0 {
            return fail("hidden width must be at least 1".into());
        }
        for (name, r) in [("dropout", self.dropout), ("dropedge", self.dropedge)] {
            if !(0.0..1.0).contains(&r) {
                return fail(format!("{name} rate {r} outside [0, 1)"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return fail(format!("alpha={} and beta={} must be positive", self.alpha, self.beta));
        }
        if !(self.tau > 0.0) {
            return fail(format!("tau={} must be positive", self.tau));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return fail(format!("threshold {} outside [0, 1)", self.threshold));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("{key}: unknown {what} '{value}'"));
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "dropedge" => self.dropedge = num(key, value)?,
            "samples" | "S" => self.samples = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "truncation" | "T" => self.truncation = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "kl_scale" => self.kl_scale = KlScale::parse(value).ok_or_else(|| bad("kl scale"))?,
            "kl_method" => self.kl_method = parse_kl_method(value).ok_or_else(|| bad("kl method"))?,
            "backbone" => self.backbone = Backbone::parse(value).ok_or_else(|| bad("backbone"))?,
            "eval_policy" => self.eval_policy = EvalMaskPolicy::parse(value).ok_or_else(|| bad("eval policy"))?,
            "normalization" => self.normalization = Normalization::parse(value).ok_or_else(|| bad("normalization"))?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Flat snapshot; [`TrainConfig::from_map`] inverts it.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let pairs: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("lr", self.lr.to_string()),
            ("dropout", self.dropout.to_string()),
            ("dropedge", self.dropedge.to_string()),
            ("samples", self.samples.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("truncation", self.truncation.to_string()),
            ("tau", self.tau.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("kl_scale", self.kl_scale.name().to_string()),
            ("kl_method", kl_method_name(self.kl_method)),
            ("backbone", self.backbone.name().to_string()),
            ("eval_policy", self.eval_policy.name().to_string()),
            ("threshold", self.threshold.to_string()),
            ("normalization", self.normalization.name().to_string()),
            ("seed", self.seed.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in map {
            c.set(k, v)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_round_trip() {
        let mut c = TrainConfig::default();
        c.set("kl_method", "taylor:10").unwrap();
        c.set("backbone", "resgcn").unwrap();
        c.set("lr", "0.005").unwrap();
        c.set("seed", "17").unwrap();
        let back = TrainConfig::from_map(&c.to_map()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.to_map().len(), KEYS.len());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig::default();
        assert!(c.set("epochs", "-3").is_err());
        assert!(c.set("backbone", "gat").is_err());
        assert!(c.set("nonsense", "1").is_err());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            samples: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
