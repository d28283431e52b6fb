use crate::error::Result;
use crate::process::{StickBreakingPrior, VariationalPosterior, PROB_EPS};
use crate::tensor::special::{digamma, ln_beta, trigamma, EULER_GAMMA};
use crate::tensor::{Matrix, Tape, Var};

/// How `E_q[ln(1 - ν)]` is evaluated inside the Kumaraswamy-to-beta KL.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KlNuMethod {
    /// Tanh-sinh quadrature over the inverse-CDF variable. Accurate to about
    /// 1e-12 for all parameters of practical interest.
    #[default]
    Quadrature,
    /// Truncated series `-b Σ_{m≤terms} B(m/a, b) / (m + ab)`. Converges
    /// slowly when `β > 1`; kept for comparison.
    Taylor { terms: usize },
}

const TS_STEP: f64 = 1.0 / 32.0;
const TS_LIMIT: f64 = 4.5;

/// `(E[ln(1-ν)], ∂/∂a, ∂/∂b)` for `ν ~ Kumaraswamy(a, b)`, by tanh-sinh
/// quadrature of `ln(1 - ν(u))` over `u ∈ (0, 1)`.
pub fn expected_log1m_nu(a: f64, b: f64) -> (f64, f64, f64) {
    let (mut e, mut da, mut db) = (0.0, 0.0, 0.0);
    let half = std::f64::consts::FRAC_PI_2;
    let k_max = (TS_LIMIT / TS_STEP).round() as i64;
    for k in -k_max..=k_max {
        let t = k as f64 * TS_STEP;
        let s = 2.0 * half * t.sinh();
        // u = sigmoid(s), 1 - u = sigmoid(-s); ln u = -softplus(-s).
        let u = 1.0 / (1.0 + (-s).exp());
        let one_m_u = 1.0 / (1.0 + s.exp());
        let w = TS_STEP * 2.0 * half * t.cosh() * u * one_m_u;
        if w == 0.0 {
            continue;
        }
        let ln_u = if s > 0.0 { -(-s).exp().ln_1p() } else { s - s.exp().ln_1p() };
        let r = (ln_u / b).min(-f64::MIN_POSITIVE);
        let tt = r.exp();
        let ell = (-r.exp_m1()).ln();
        let (g, ga, gb);
        if tt < 1e-10 {
            // 1 - ν ≈ t / a for tiny t = u^{1/b}.
            g = r - a.ln();
            ga = -1.0 / a;
            gb = -ln_u / (b * b);
        } else {
            let nu = (ell / a).exp();
            let one_m_nu = -(ell / a).exp_m1();
            g = one_m_nu.ln();
            let ratio = nu / one_m_nu;
            ga = ratio * ell / (a * a);
            gb = -ratio / a * tt * ln_u / (b * b * (-r.exp_m1()));
        }
        e += w * g;
        da += w * ga;
        db += w * gb;
    }
    (e, da, db)
}

/// Series form of [`expected_log1m_nu`] truncated after `terms` terms.
pub fn expected_log1m_nu_series(a: f64, b: f64, terms: usize) -> (f64, f64, f64) {
    let (mut s, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for m in 1..=terms {
        let m = m as f64;
        let x = m / a;
        let term = ln_beta(x, b).exp() / (m + a * b);
        let psi_xb = digamma(x + b);
        s += term;
        sa += term * ((digamma(x) - psi_xb) * (-m / (a * a)) - b / (m + a * b));
        sb += term * ((digamma(b) - psi_xb) - a / (m + a * b));
    }
    (-b * s, -b * sa, -s - b * sb)
}

/// One-layer KL(Kumaraswamy(a, b) ‖ Beta(α, β)) and its partials in `a`, `b`.
pub fn kl_kumaraswamy_beta(a: f64, b: f64, prior: &StickBreakingPrior, method: KlNuMethod) -> (f64, f64, f64) {
    let (alpha, beta) = (prior.alpha(), prior.beta());
    let (e, ea, eb) = match method {
        KlNuMethod::Quadrature => expected_log1m_nu(a, b),
        KlNuMethod::Taylor { terms } => expected_log1m_nu_series(a, b, terms),
    };
    let c = -EULER_GAMMA - digamma(b) - 1.0 / b;
    let value = (1.0 - alpha / a) * c + (a * b).ln() + ln_beta(alpha, beta) - (b - 1.0) / b - (beta - 1.0) * e;
    let d_a = alpha / (a * a) * c + 1.0 / a - (beta - 1.0) * ea;
    let d_b = (1.0 - alpha / a) * (-trigamma(b) + 1.0 / (b * b)) + 1.0 / b - 1.0 / (b * b) - (beta - 1.0) * eb;
    (value, d_a, d_b)
}

/// `Σ_l KL(q(ν_l) ‖ p(ν_l))` with partials w.r.t. the stored `log a_l`,
/// `log b_l`.
pub fn kl_nu_with_grad(post: &VariationalPosterior, prior: &StickBreakingPrior, method: KlNuMethod) -> (f64, Vec<f64>, Vec<f64>) {
    let mut total = 0.0;
    let mut ga = Vec::with_capacity(post.truncation());
    let mut gb = Vec::with_capacity(post.truncation());
    for (a, b) in post.a().into_iter().zip(post.b()) {
        let (v, da, db) = kl_kumaraswamy_beta(a, b, prior, method);
        total += v;
        ga.push(a * da);
        gb.push(b * db);
    }
    (total, ga, gb)
}

pub fn kl_nu(post: &VariationalPosterior, prior: &StickBreakingPrior, method: KlNuMethod) -> f64 {
    kl_nu_with_grad(post, prior, method).0
}

/// Records `kl_nu` for the 1×T parameter rows `log_a`, `log_b`.
pub fn record_kl_nu(tape: &mut Tape, log_a: Var, log_b: Var, prior: &StickBreakingPrior, method: KlNuMethod) -> Result<Var> {
    let post = VariationalPosterior {
        log_a: tape.value(log_a).as_slice().to_vec(),
        log_b: tape.value(log_b).as_slice().to_vec(),
        tau: 1.0,
    };
    let (value, ga, gb) = kl_nu_with_grad(&post, prior, method);
    let t = ga.len();
    tape.scalar_fn(
        &[log_a, log_b],
        value,
        vec![Matrix::from_vec(1, t, ga)?, Matrix::from_vec(1, t, gb)?],
    )
}

fn bernoulli_kl(q: f64, p: f64) -> f64 {
    let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
}

/// `O · Σ_l KL(Bernoulli(π_q,l) ‖ Bernoulli(π_p,l))`, both clamped to
/// `[1e-6, 1 - 1e-6]`.
pub fn kl_z(pi_q: &[f64], pi_p: &[f64], o: usize) -> f64 {
    o as f64 * pi_q.iter().zip(pi_p).map(|(&q, &p)| bernoulli_kl(q, p)).sum::<f64>()
}

/// Records `kl_z` for a 1×T row of posterior stick probabilities.
pub fn record_kl_z(tape: &mut Tape, pi_q: Var, pi_p: &[f64], o: usize) -> Result<Var> {
    let t = pi_p.len();
    let p: Vec<f64> = pi_p.iter().map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect();
    let neg_log_p = Matrix::from_vec(1, t, p.iter().map(|p| -p.ln()).collect())?;
    let neg_log_1mp = Matrix::from_vec(1, t, p.iter().map(|p| -(-p).ln_1p()).collect())?;
    let q = tape.clamp(pi_q, PROB_EPS, 1.0 - PROB_EPS);
    let log_q = tape.log(q)?;
    let ratio = tape.add_const(log_q, &neg_log_p)?;
    let first = tape.mul(q, ratio)?;
    let one_m_q = tape.one_minus(q);
    let log_1mq = tape.log(one_m_q)?;
    let ratio = tape.add_const(log_1mq, &neg_log_1mp)?;
    let second = tape.mul(one_m_q, ratio)?;
    let both = tape.add(first, second)?;
    let total = tape.sum(both);
    Ok(tape.scale(total, o as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::substream;
    use crate::tensor::special::ln_gamma;

    /// KL by direct quadrature in ν-space: composite Simpson on a grid that
    /// is refined toward both endpoints through the substitution ν = w².
    fn kl_reference(a: f64, b: f64, alpha: f64, beta: f64) -> f64 {
        let log_q = |v: f64| a.ln() + b.ln() + (a - 1.0) * v.ln() + (b - 1.0) * (1.0 - v.powf(a)).ln();
        let log_p = |v: f64| {
            (alpha - 1.0) * v.ln() + (beta - 1.0) * (1.0 - v).ln() - (ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta))
        };
        // ν = sin²(θ), θ ∈ (0, π/2), clusters nodes at both ends.
        let n = 200_000;
        let h = std::f64::consts::FRAC_PI_2 / n as f64;
        let mut acc = 0.0;
        for i in 1..n {
            let th = i as f64 * h;
            let v = th.sin().powi(2);
            let jac = 2.0 * th.sin() * th.cos();
            let lq = log_q(v);
            let f = lq.exp() * (lq - log_p(v)) * jac;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f;
        }
        acc * h / 3.0
    }

    /// `E[ln(1-ν)]` by midpoint rule in u with many nodes.
    fn expectation_reference(a: f64, b: f64) -> f64 {
        let n = 400_000;
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                (1.0 - (1.0 - u.powf(1.0 / b)).powf(1.0 / a)).ln()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn uniform_vs_uniform_is_zero() {
        let prior = StickBreakingPrior::new(1.0, 1.0).unwrap();
        let (v, _, _) = kl_kumaraswamy_beta(1.0, 1.0, &prior, KlNuMethod::Quadrature);
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn known_expectation_cases() {
        // a = 1: ν = 1 - u^{1/b} so ln(1-ν) = ln(u)/b, mean -1/b.
        let (e, _, _) = expected_log1m_nu(1.0, 3.0);
        assert!((e + 1.0 / 3.0).abs() < 1e-12, "{e}");
        // b = 1: ν = (1-u)^{1/a}, ν ~ Beta(a, 1), E[ln(1-ν)] = ψ(1) - ψ(1+a).
        let (e, _, _) = expected_log1m_nu(2.5, 1.0);
        assert!((e - (digamma(1.0) - digamma(3.5))).abs() < 1e-12, "{e}");
    }

    #[test]
    fn expectation_matches_midpoint_rule() {
        for &(a, b) in &[(5.0, 2.0), (0.7, 0.4), (2.0, 8.0)] {
            let got = expected_log1m_nu(a, b).0;
            let want = expectation_reference(a, b);
            assert!((got - want).abs() < 1e-3, "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn kumaraswamy_2_2_vs_uniform() {
        let prior = StickBreakingPrior::new(1.0, 1.0).unwrap();
        let got = kl_kumaraswamy_beta(2.0, 2.0, &prior, KlNuMethod::Quadrature).0;
        let want = kl_reference(2.0, 2.0, 1.0, 1.0);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn matches_reference_on_random_pairs() {
        let mut rng = substream(21, &[]);
        for _ in 0..20 {
            let a = rng.gen_range(0.5..6.0);
            let b = rng.gen_range(0.5..6.0);
            let alpha = rng.gen_range(0.5..6.0);
            let beta = rng.gen_range(0.5..6.0);
            let prior = StickBreakingPrior::new(alpha, beta).unwrap();
            let got = kl_kumaraswamy_beta(a, b, &prior, KlNuMethod::Quadrature).0;
            let want = kl_reference(a, b, alpha, beta);
            assert!((got - want).abs() < 1e-3, "({a},{b}) vs ({alpha},{beta}): {got} vs {want}");
        }
    }

    #[test]
    fn nonnegative_on_random_settings() {
        let mut rng = substream(22, &[]);
        for _ in 0..100 {
            let prior = StickBreakingPrior::new(rng.gen_range(0.2..8.0), rng.gen_range(0.2..8.0)).unwrap();
            let v = kl_kumaraswamy_beta(rng.gen_range(0.2..8.0), rng.gen_range(0.2..8.0), &prior, KlNuMethod::Quadrature).0;
            assert!(v >= -1e-10, "{v}");
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let prior = StickBreakingPrior::new(5.0, 2.0).unwrap();
        for method in [KlNuMethod::Quadrature, KlNuMethod::Taylor { terms: 10 }] {
            for &(a, b) in &[(5.0, 2.0), (0.8, 3.0), (2.0, 0.6)] {
                let (_, da, db) = kl_kumaraswamy_beta(a, b, &prior, method);
                let h = 1e-6;
                let f = |a, b| kl_kumaraswamy_beta(a, b, &prior, method).0;
                let fa = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
                let fb = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
                assert!((da - fa).abs() < 1e-6 * (1.0 + fa.abs()), "{method:?} da {da} vs {fa}");
                assert!((db - fb).abs() < 1e-6 * (1.0 + fb.abs()), "{method:?} db {db} vs {fb}");
            }
        }
    }

    #[test]
    fn series_converges_to_quadrature_when_beta_is_one() {
        // With β = 1 the expectation term drops out entirely.
        let prior = StickBreakingPrior::new(3.0, 1.0).unwrap();
        let q = kl_kumaraswamy_beta(2.0, 2.0, &prior, KlNuMethod::Quadrature).0;
        let s = kl_kumaraswamy_beta(2.0, 2.0, &prior, KlNuMethod::Taylor { terms: 10 }).0;
        assert!((q - s).abs() < 1e-12);
    }

    #[test]
    fn kl_z_examples() {
        assert_eq!(kl_z(&[0.3, 0.2], &[0.3, 0.2], 4), 0.0);
        let v = kl_z(&[0.9], &[0.5], 1);
        assert!((v - (0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln())).abs() < 1e-12);
        assert!((v - 0.3681).abs() < 1e-4);
        let mut rng = substream(23, &[]);
        for _ in 0..100 {
            let q: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
            let p: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
            assert!(kl_z(&q, &p, 3) >= 0.0);
        }
    }

    #[test]
    fn kl_z_tape_matches_plain() {
        let q = [0.9, 0.4, 1.0];
        let p = [0.5, 0.25, 0.125];
        let mut tape = Tape::new();
        let v = tape.param(Matrix::from_vec(1, 3, q.to_vec()).unwrap());
        let k = record_kl_z(&mut tape, v, &p, 7).unwrap();
        assert!((tape.value(k).item() - kl_z(&q, &p, 7)).abs() < 1e-12);
        let g = tape.backward(k).unwrap();
        let grad = g.get(v).unwrap();
        // d/dq of q ln(q/p) + (1-q) ln((1-q)/(1-p)) is ln(q(1-p)/(p(1-q))).
        let want = 7.0 * (0.9f64 * 0.5 / (0.5 * 0.1)).ln();
        assert!((grad[(0, 0)] - want).abs() < 1e-9);
    }

    #[test]
    fn kl_nu_tape_gradient() {
        let prior = StickBreakingPrior::new(5.0, 2.0).unwrap();
        let post = VariationalPosterior::new(&[1.5, 4.0], &[2.5, 0.9], 0.67).unwrap();
        let mut tape = Tape::new();
        let la = tape.param(Matrix::from_vec(1, 2, post.log_a.clone()).unwrap());
        let lb = tape.param(Matrix::from_vec(1, 2, post.log_b.clone()).unwrap());
        let k = record_kl_nu(&mut tape, la, lb, &prior, KlNuMethod::Quadrature).unwrap();
        let g = tape.backward(k).unwrap();
        let h = 1e-6;
        for l in 0..2 {
            let mut up = post.clone();
            let mut dn = post.clone();
            up.log_a[l] += h;
            dn.log_a[l] -= h;
            let fd = (kl_nu(&up, &prior, KlNuMethod::Quadrature) - kl_nu(&dn, &prior, KlNuMethod::Quadrature)) / (2.0 * h);
            assert!((g.get(la).unwrap()[(0, l)] - fd).abs() < 1e-6, "layer {l}");
        }
    }
}
