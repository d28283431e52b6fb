use rand::Rng;

use crate::error::{Error, Result};
use crate::process::PROB_EPS;
use crate::rng::logistic;
use crate::tensor::sigmoid;

fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    p.ln() - (-p).ln_1p()
}

/// Relaxed Bernoulli draw for a given logistic noise value:
/// `sigmoid((logit π + ε) / τ)`.
pub fn concrete_relaxed(pi: f64, tau: f64, eps: f64) -> f64 {
    sigmoid((logit(pi) + eps) / tau)
}

/// `count` independent relaxed Bernoulli(π) draws at temperature `tau`.
pub fn sample_concrete_bernoulli<R: Rng + ?Sized>(pi: f64, tau: f64, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| concrete_relaxed(pi, tau, logistic(rng))).collect()
}

/// Log density of the binary concrete distribution at `z ∈ (0, 1)`.
pub fn concrete_log_density(z: f64, pi: f64, tau: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::domain("concrete_log_density", format!("z = {z} outside (0, 1)")));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::domain("concrete_log_density", format!("pi = {pi} outside (0, 1)")));
    }
    if !(tau > 0.0) {
        return Err(Error::domain("concrete_log_density", format!("tau = {tau} is not positive")));
    }
    let (lz, l1z) = (z.ln(), (-z).ln_1p());
    let (lp, l1p) = (pi.ln(), (-pi).ln_1p());
    let x = lp - tau * lz;
    let y = l1p - tau * l1z;
    let m = x.max(y);
    let lse = m + ((x - m).exp() + (y - m).exp()).ln();
    Ok(tau.ln() + lp + l1p - (tau + 1.0) * (lz + l1z) - 2.0 * lse)
}
