use rand::Rng;

use crate::error::{Error, Result};
use crate::process::{kumaraswamy_inverse_cdf, stick_breaking, VariationalPosterior, PROB_EPS};
use crate::process::concrete_relaxed;
use crate::rng::{logistic, open_unit};
use crate::tensor::{Matrix, Tape, Var};

/// The randomness behind one mask sample: one uniform per stick and one
/// logistic variate per (layer, channel). Kept separate from the parameters
/// so the same draw can be replayed on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskNoise {
    pub uniforms: Vec<f64>,
    /// T×O.
    pub logistic: Matrix,
}

impl MaskNoise {
    pub fn draw<R: Rng + ?Sized>(truncation: usize, channels: usize, rng: &mut R) -> Self {
        let uniforms = (0..truncation).map(|_| open_unit(rng)).collect();
        let mut eps = Matrix::zeros(truncation, channels);
        for v in eps.as_mut_slice() {
            *v = logistic(rng);
        }
        MaskNoise { uniforms, logistic: eps }
    }

    pub fn truncation(&self) -> usize {
        self.uniforms.len()
    }

    pub fn channels(&self) -> usize {
        self.logistic.cols()
    }
}

/// A concrete draw of stick fractions, stick probabilities and relaxed masks.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSample {
    pub nu: Vec<f64>,
    pub pi: Vec<f64>,
    /// O×T; column `l` masks the channels of layer `l + 1`.
    pub z: Matrix,
    /// Deepest layer with an active channel, 0 if none.
    pub scope: usize,
}

impl MaskSample {
    pub fn from_noise(post: &VariationalPosterior, noise: &MaskNoise, threshold: f64) -> Result<Self> {
        let t = post.truncation();
        if noise.truncation() != t || noise.logistic.rows() != t {
            return Err(Error::Dimension {
                op: "mask_sample",
                left: (1, t),
                right: noise.logistic.shape(),
            });
        }
        let nu: Vec<f64> = noise
            .uniforms
            .iter()
            .zip(post.a().iter().zip(post.b()))
            .map(|(&u, (&a, b))| kumaraswamy_inverse_cdf(u, a, b))
            .collect();
        let pi = stick_breaking(&nu)?;
        let o = noise.channels();
        let mut z = Matrix::zeros(o, t);
        for l in 0..t {
            for c in 0..o {
                z[(c, l)] = concrete_relaxed(pi[l], post.tau, noise.logistic[(l, c)]);
            }
        }
        let scope = active_scope(&z, threshold);
        Ok(MaskSample { nu, pi, z, scope })
    }

    pub fn draw<R: Rng + ?Sized>(post: &VariationalPosterior, channels: usize, threshold: f64, rng: &mut R) -> Result<Self> {
        let noise = MaskNoise::draw(post.truncation(), channels, rng);
        Self::from_noise(post, &noise, threshold)
    }
}

/// Largest 1-based layer index whose mask column has an entry above
/// `threshold`; 0 when every column is inactive.
pub fn active_scope(z: &Matrix, threshold: f64) -> usize {
    (0..z.cols())
        .rev()
        .find(|&l| (0..z.rows()).any(|c| z[(c, l)] > threshold))
        .map_or(0, |l| l + 1)
}

/// Tape handles of a recorded mask sample.
#[derive(Clone, Copy, Debug)]
pub struct MaskVars {
    /// 1×T.
    pub nu: Var,
    /// 1×T.
    pub pi: Var,
    /// T×O, the transpose of [`MaskSample::z`]; row `l` masks layer `l + 1`.
    pub z_rows: Var,
}

/// Differentiable Kumaraswamy inverse CDF: `ν = (1 - exp(ln u / b))^{1/a}`
/// for parameter rows `log_a`, `log_b` shaped like `ln_u`.
pub fn record_nu(tape: &mut Tape, log_a: Var, log_b: Var, ln_u: Matrix) -> Result<Var> {
    let neg_lb = tape.scale(log_b, -1.0);
    let inv_b = tape.exp(neg_lb)?;
    let s = tape.mul_const(inv_b, ln_u)?;
    let s = tape.clamp(s, f64::NEG_INFINITY, -f64::MIN_POSITIVE);
    let ell = tape.log1m_exp(s)?;
    let neg_la = tape.scale(log_a, -1.0);
    let inv_a = tape.exp(neg_la)?;
    let log_nu = tape.mul(ell, inv_a)?;
    let nu = tape.exp(log_nu)?;
    Ok(tape.clamp(nu, PROB_EPS, 1.0 - PROB_EPS))
}

/// Replays `noise` through the reparameterized sampler on `tape`.
pub fn record_mask_sample(tape: &mut Tape, log_a: Var, log_b: Var, tau: f64, noise: &MaskNoise) -> Result<MaskVars> {
    let t = noise.truncation();
    if tape.shape(log_a) != (1, t) || tape.shape(log_b) != (1, t) {
        return Err(Error::Dimension {
            op: "record_mask_sample",
            left: tape.shape(log_a),
            right: (1, t),
        });
    }
    let ln_u = Matrix::from_vec(1, t, noise.uniforms.iter().map(|u| u.ln()).collect())?;
    let nu = record_nu(tape, log_a, log_b, ln_u)?;
    let log_nu = tape.log(nu)?;
    let log_pi = tape.cumsum(log_nu);
    let pi = tape.exp(log_pi)?;
    let q = tape.clamp(pi, PROB_EPS, 1.0 - PROB_EPS);
    let log_q = tape.log(q)?;
    let one_m_q = tape.one_minus(q);
    let log_1mq = tape.log(one_m_q)?;
    let logit = tape.sub(log_q, log_1mq)?;
    let col = tape.transpose(logit);
    let wide = tape.repeat_cols(col, noise.channels())?;
    let noisy = tape.add_const(wide, &noise.logistic)?;
    let scaled = tape.scale(noisy, 1.0 / tau);
    let z_rows = tape.sigmoid(scaled);
    Ok(MaskVars { nu, pi, z_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{kumaraswamy_mean, StickBreakingPrior};
    use crate::rng::substream;
    use crate::tensor::special::{digamma, ln_beta};

    #[test]
    fn tape_replay_matches_plain_sample() {
        let post = VariationalPosterior::new(&[5.0, 1.2, 3.0], &[2.0, 0.7, 4.0], 0.67).unwrap();
        let noise = MaskNoise::draw(3, 4, &mut substream(31, &[]));
        let plain = MaskSample::from_noise(&post, &noise, 0.5).unwrap();
        let mut tape = Tape::new();
        let la = tape.param(Matrix::from_vec(1, 3, post.log_a.clone()).unwrap());
        let lb = tape.param(Matrix::from_vec(1, 3, post.log_b.clone()).unwrap());
        let vars = record_mask_sample(&mut tape, la, lb, post.tau, &noise).unwrap();
        for l in 0..3 {
            assert!((tape.value(vars.nu)[(0, l)] - plain.nu[l]).abs() < 1e-12);
            assert!((tape.value(vars.pi)[(0, l)] - plain.pi[l]).abs() < 1e-12);
            for c in 0..4 {
                assert!((tape.value(vars.z_rows)[(l, c)] - plain.z[(c, l)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sticks_are_products_and_nonincreasing() {
        let post = VariationalPosterior::new(&[2.0; 6], &[3.0; 6], 0.67).unwrap();
        let mut rng = substream(32, &[]);
        for _ in 0..200 {
            let s = MaskSample::draw(&post, 3, 0.5, &mut rng).unwrap();
            let mut prod = 1.0;
            for l in 0..6 {
                prod *= s.nu[l];
                assert!((s.pi[l] - prod).abs() <= 1e-14 * prod.max(1e-300) * 10.0);
                if l > 0 {
                    assert!(s.pi[l] <= s.pi[l - 1]);
                }
            }
            assert!(s.z.as_slice().iter().all(|&z| z > 0.0 && z < 1.0));
            assert_eq!(s.scope, active_scope(&s.z, 0.5));
        }
    }

    #[test]
    fn scope_examples() {
        let z = Matrix::from_rows(&[[0.9, 0.2, 0.7, 0.1], [0.1, 0.1, 0.1, 0.4]]);
        assert_eq!(active_scope(&z, 0.5), 3);
        assert_eq!(active_scope(&Matrix::filled(2, 3, 0.1), 0.5), 0);
        assert_eq!(active_scope(&Matrix::filled(2, 3, 0.5), 0.5), 0);
        assert_eq!(active_scope(&Matrix::filled(2, 3, 0.51), 0.5), 3);
    }

    #[test]
    fn kumaraswamy_monte_carlo_mean() {
        let post = VariationalPosterior::new(&[5.0], &[2.0], 0.67).unwrap();
        let mut rng = substream(33, &[]);
        let n = 100_000;
        let mean = (0..n).map(|_| crate::process::sample_posterior_nu(&post, &mut rng).nu[0]).sum::<f64>() / n as f64;
        let want = 2.0 * ln_beta(1.2, 2.0).exp();
        assert!((mean - want).abs() < 0.005, "{mean} vs {want}");
        assert!((kumaraswamy_mean(5.0, 2.0) - want).abs() < 1e-14);
    }

    #[test]
    fn prior_stick_means() {
        let prior = StickBreakingPrior::new(5.0, 2.0).unwrap();
        let beta = rand_distr::Beta::new(5.0, 2.0).unwrap();
        let mut rng = substream(34, &[]);
        let n = 100_000;
        let t = 5;
        let mut sums = vec![0.0; t];
        for _ in 0..n {
            let nu: Vec<f64> = (0..t).map(|_| rand_distr::Distribution::sample(&beta, &mut rng)).collect();
            for (s, p) in sums.iter_mut().zip(stick_breaking(&nu).unwrap()) {
                *s += p;
            }
        }
        for (s, want) in sums.iter().zip(prior.expected_sticks(t)) {
            assert!((s / n as f64 - want).abs() < 0.01);
        }
    }

    /// Mean of ν over shared uniforms, as a function of (log a, log b).
    fn mc_mean(log_a: f64, log_b: f64, ln_u: &[f64]) -> f64 {
        let (a, b) = (log_a.exp(), log_b.exp());
        ln_u.iter().map(|&l| kumaraswamy_inverse_cdf(l.exp(), a, b)).sum::<f64>() / ln_u.len() as f64
    }

    #[test]
    fn reparameterization_gradient_of_mean() {
        let n = 100_000;
        let mut rng = substream(35, &[]);
        let ln_u: Vec<f64> = (0..n).map(|_| open_unit(&mut rng).ln()).collect();
        let (a, b) = (2.0f64, 3.0f64);
        let mut tape = Tape::new();
        let la = tape.param(Matrix::scalar(a.ln()));
        let lb = tape.param(Matrix::scalar(b.ln()));
        let la_n = tape.repeat_cols(la, n).unwrap();
        let lb_n = tape.repeat_cols(lb, n).unwrap();
        let nu = record_nu(&mut tape, la_n, lb_n, Matrix::from_vec(1, n, ln_u.clone()).unwrap()).unwrap();
        let total = tape.sum(nu);
        let mean = tape.scale(total, 1.0 / n as f64);
        let g = tape.backward(mean).unwrap();
        let (ga, gb) = (g.get(la).unwrap().item(), g.get(lb).unwrap().item());

        let h = 1e-5;
        let fd_a = (mc_mean(a.ln() + h, b.ln(), &ln_u) - mc_mean(a.ln() - h, b.ln(), &ln_u)) / (2.0 * h);
        let fd_b = (mc_mean(a.ln(), b.ln() + h, &ln_u) - mc_mean(a.ln(), b.ln() - h, &ln_u)) / (2.0 * h);
        assert!((ga - fd_a).abs() < 1e-2 * fd_a.abs(), "{ga} vs {fd_a}");
        assert!((gb - fd_b).abs() < 1e-2 * fd_b.abs(), "{gb} vs {fd_b}");

        // Against the exact moment: d/dlog a of b·B(1+1/a, b).
        let m = kumaraswamy_mean(a, b);
        let x = 1.0 + 1.0 / a;
        let exact_a = m * (digamma(x) - digamma(x + b)) * (-1.0 / a);
        let exact_b = m * (1.0 + b * (digamma(b) - digamma(x + b)));
        assert!((ga - exact_a).abs() < 1e-2 * exact_a.abs(), "{ga} vs {exact_a}");
        assert!((gb - exact_b).abs() < 1e-2 * exact_b.abs(), "{gb} vs {exact_b}");
    }
}
