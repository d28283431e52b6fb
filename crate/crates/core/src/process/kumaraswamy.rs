use rand::Rng;

use crate::process::{VariationalPosterior, PROB_EPS};
use crate::rng::open_unit;
use crate::tensor::special::ln_beta;

/// Inverse CDF of Kumaraswamy(a, b): `(1 - u^{1/b})^{1/a}`, clamped to
/// `[1e-6, 1 - 1e-6]`.
pub fn kumaraswamy_inverse_cdf(u: f64, a: f64, b: f64) -> f64 {
    let s = (u.ln() / b).min(-f64::MIN_POSITIVE);
    let log1m = (-s.exp_m1()).ln();
    (log1m / a).exp().clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `E[ν] = b · B(1 + 1/a, b)`.
pub fn kumaraswamy_mean(a: f64, b: f64) -> f64 {
    b * ln_beta(1.0 + 1.0 / a, b).exp()
}

/// One posterior draw of the stick fractions with the uniforms that produced
/// it, so the same draw can be replayed on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct NuDraw {
    pub nu: Vec<f64>,
    pub uniforms: Vec<f64>,
}

pub fn sample_posterior_nu<R: Rng + ?Sized>(post: &VariationalPosterior, rng: &mut R) -> NuDraw {
    let uniforms: Vec<f64> = (0..post.truncation()).map(|_| open_unit(rng)).collect();
    let nu = uniforms
        .iter()
        .zip(post.a().iter().zip(post.b()))
        .map(|(&u, (&a, b))| kumaraswamy_inverse_cdf(u, a, b))
        .collect();
    NuDraw { nu, uniforms }
}
