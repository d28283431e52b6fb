//! Beta-process stick breaking, the Kumaraswamy variational posterior over
//! stick fractions, relaxed Bernoulli hop masks, and the KL terms of the ELBO.

mod concrete;
mod kl;
mod kumaraswamy;
mod mask;

pub use concrete::{concrete_log_density, concrete_relaxed, sample_concrete_bernoulli};
pub use kl::{
    expected_log1m_nu, expected_log1m_nu_series, kl_kumaraswamy_beta, kl_nu, kl_nu_with_grad, kl_z, record_kl_nu, record_kl_z,
    KlNuMethod,
};
pub use kumaraswamy::{kumaraswamy_inverse_cdf, kumaraswamy_mean, sample_posterior_nu, NuDraw};
pub use mask::{active_scope, record_mask_sample, record_nu, MaskNoise, MaskSample, MaskVars};

use crate::error::{Error, Result};

/// Clamp applied before every logit or log of a probability.
pub const PROB_EPS: f64 = 1e-6;

/// Default relaxation temperature of the concrete masks.
pub const DEFAULT_TAU: f64 = 0.67;

/// Beta(α, β) prior on each stick fraction ν_l.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StickBreakingPrior {
    alpha: f64,
    beta: f64,
}

impl StickBreakingPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Precondition(format!(
                "beta-process hyperparameters must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(StickBreakingPrior { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E[ν] = α / (α + β)`.
    pub fn mean_fraction(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Expected stick probabilities `E[π_l] = (α/(α+β))^l` for `l = 1..=t`.
    pub fn expected_sticks(&self, t: usize) -> Vec<f64> {
        let m = self.mean_fraction();
        (1..=t).map(|l| m.powi(l as i32)).collect()
    }
}

/// Variational posterior: `q(ν_l) = Kumaraswamy(a_l, b_l)` for `l = 1..=T`
/// and relaxed Bernoulli masks at temperature `tau`. Stored as logs so that
/// every `a_l`, `b_l` stays positive under gradient updates.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalPosterior {
    pub log_a: Vec<f64>,
    pub log_b: Vec<f64>,
    pub tau: f64,
}

impl VariationalPosterior {
    pub fn new(a: &[f64], b: &[f64], tau: f64) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Precondition(format!(
                "posterior needs T >= 1 matching a/b vectors, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b).any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Precondition("posterior parameters must be positive and finite".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Precondition(format!("temperature must be positive, got {tau}")));
        }
        Ok(VariationalPosterior {
            log_a: a.iter().map(|x| x.ln()).collect(),
            log_b: b.iter().map(|x| x.ln()).collect(),
            tau,
        })
    }

    /// Every layer initialized at the prior's `(α, β)`.
    pub fn from_prior(prior: &StickBreakingPrior, truncation: usize, tau: f64) -> Result<Self> {
        Self::new(&vec![prior.alpha; truncation], &vec![prior.beta; truncation], tau)
    }

    pub fn truncation(&self) -> usize {
        self.log_a.len()
    }

    pub fn a(&self) -> Vec<f64> {
        self.log_a.iter().map(|x| x.exp()).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.log_b.iter().map(|x| x.exp()).collect()
    }

    /// Posterior mean of each stick fraction.
    pub fn mean_fractions(&self) -> Vec<f64> {
        self.a().iter().zip(self.b()).map(|(&a, b)| kumaraswamy_mean(a, b)).collect()
    }

    /// Stick probabilities evaluated at the posterior mean fractions.
    pub fn mean_sticks(&self) -> Vec<f64> {
        stick_breaking(&self.mean_fractions()).expect("means lie in (0, 1)")
    }
}

/// `π_l = ν_1 ⋯ ν_l`, accumulated in log space.
pub fn stick_breaking(nu: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    nu.iter()
        .map(|&v| {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain("stick_breaking", format!("fraction {v} outside (0, 1]")));
            }
            acc += v.ln();
            Ok(acc.exp())
        })
        .collect()
}
