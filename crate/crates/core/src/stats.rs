//! Shared numerical statistics: stable log-domain reductions, binomial
//! confidence intervals, Kolmogorov–Smirnov tests and least squares.

/// `log(sum(exp(x)))` with max shift; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Mean and standard error of `exp(x)` over log-domain samples, reported as
/// `(log_mean, se_over_mean)`. The relative standard error is shift-invariant
/// so it stays finite even when the mean itself under/overflows.
pub fn log_mean_exp_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lse = log_sum_exp(xs);
    if !lse.is_finite() {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let log_mean = lse - n.ln();
    // sample variance of exp(x - max) for the relative se
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let mean_s = shifted.iter().sum::<f64>() / n;
    let var_s = shifted.iter().map(|w| (w - mean_s).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let rel_se = (var_s / n).sqrt() / mean_s;
    (log_mean, rel_se)
}

/// Effective sample size `(sum w)^2 / sum w^2` of log-domain weights.
pub fn effective_sample_size(log_ws: &[f64]) -> f64 {
    let m = log_ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return 0.0;
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for lw in log_ws {
        let w = (lw - m).exp();
        s1 += w;
        s2 += w * w;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s1 * s1 / s2
    }
}

/// Lanczos approximation of `ln Gamma(x)` for `x > 0` (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let x = x - 1.0;
    let mut a = COEFF[0];
    let t = x + 7.5;
    for (i, c) in COEFF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Log-probability that an i.i.d. initial configuration with per-vertex law
/// `(p0, p1, 1-p0-p1)` has exactly `s` susceptible and `i` infected among
/// `n` vertices.
pub fn multinomial_log_prob(n: u64, s: u64, i: u64, p0: f64, p1: f64) -> f64 {
    assert!(s + i <= n);
    let r = n - s - i;
    let mut lp = ln_factorial(n) - ln_factorial(s) - ln_factorial(i) - ln_factorial(r);
    if s > 0 {
        lp += s as f64 * p0.ln();
    }
    if i > 0 {
        lp += i as f64 * p1.ln();
    }
    if r > 0 {
        lp += r as f64 * (1.0 - p0 - p1).ln();
    }
    lp
}

/// Wilson score interval for `hits` successes in `trials` draws.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.1 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test p-value of `samples` against the CDF `cdf`.
pub fn ks_test_cdf(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (k, x) in samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    // Stephens' small-sample correction.
    kolmogorov_tail(d * (n.sqrt() + 0.12 + 0.11 / n.sqrt()))
}

/// Two-sample KS test p-value.
pub fn ks_test_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).expect("no NaN samples"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("no NaN samples"));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while ia < a.len() && ib < b.len() {
        let (xa, xb) = (a[ia], b[ib]);
        if xa <= xb {
            ia += 1;
        }
        if xb <= xa {
            ib += 1;
        }
        d = d.max((ia as f64 / na - ib as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    kolmogorov_tail(d * (ne + 0.12 + 0.11 / ne))
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_magnitudes() {
        let v = [1234.0, 1232.0];
        let expected = 1232.0 + (2f64.exp() + 1.0).ln();
        assert!((log_sum_exp(&v) - expected).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..15u64 {
            let direct: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            assert!((ln_factorial(n) - direct).abs() < 1e-10, "n = {n}");
        }
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn multinomial_log_prob_matches_enumeration() {
        // n = 3, p0 = 0.5, p1 = 0.2: P(s=2, i=1) = 3!/2! * 0.25 * 0.2
        let lp = multinomial_log_prob(3, 2, 1, 0.5, 0.2);
        assert!((lp.exp() - 3.0 * 0.25 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(5, 50, 1.96);
        assert!(lo < 0.1 && 0.1 < hi);
        assert!(lo > 0.0 && hi < 1.0);
    }

    #[test]
    fn ks_accepts_its_own_distribution() {
        let mut rng = crate::rng::stream(9, "ks", 0);
        let mut xs: Vec<f64> = (0..2000)
            .map(|_| crate::rng::exp_sample(&mut rng, 1.0))
            .collect();
        let p = ks_test_cdf(&mut xs, |x| 1.0 - (-x).exp());
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_a_wrong_distribution() {
        let mut rng = crate::rng::stream(9, "ks2", 0);
        let mut xs: Vec<f64> = (0..2000)
            .map(|_| crate::rng::exp_sample(&mut rng, 2.0))
            .collect();
        let p = ks_test_cdf(&mut xs, |x| 1.0 - (-x).exp());
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let x = [100.0, 200.0, 400.0];
        let y: Vec<f64> = x.iter().map(|v| -0.7 * v).collect();
        let (slope, intercept, r2) = linear_fit(&x, &y);
        assert!((slope + 0.7).abs() < 1e-12);
        assert!(intercept.abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
        // constant offset moves the intercept only
        let y2: Vec<f64> = y.iter().map(|v| v + 3.0).collect();
        let (slope2, intercept2, _) = linear_fit(&x, &y2);
        assert!((slope2 + 0.7).abs() < 1e-12);
        assert!((intercept2 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn ess_of_equal_weights_is_the_sample_size() {
        let lw = vec![3.0; 64];
        assert!((effective_sample_size(&lw) - 64.0).abs() < 1e-9);
        assert_eq!(effective_sample_size(&[]), 0.0);
    }
}
