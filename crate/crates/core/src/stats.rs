//! χ² tail probabilities, the Kolmogorov–Smirnov test and sample moments.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// `P(χ²_dof > x)`.
pub fn chi2_upper_tail(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// `P(χ²_dof ≤ x)`.
pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    1.0 - chi2_upper_tail(x, dof)
}

/// Asymptotic Kolmogorov tail `P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.3 {
        // series converges slowly here and the tail is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KsResult {
    pub n: usize,
    /// `sup |F_n − F|`.
    pub d: f64,
    /// Asymptotic p-value at `√n·D`.
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "Kolmogorov-Smirnov test needs at least 5 samples, got {n}"
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult {
        n,
        d,
        p_value: kolmogorov_tail(nf.sqrt() * d),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n − 1` divisor.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Regularized lower gamma `P(s, x)` by its power series, and the upper
    /// part by a Lentz continued fraction, as an independent oracle.
    fn upper_oracle(s: f64, x: f64) -> f64 {
        let ln_gamma = statrs::function::gamma::ln_gamma(s);
        if x < s + 1.0 {
            let mut term = 1.0 / s;
            let mut sum = term;
            let mut k = 1.0;
            while term.abs() > 1e-18 * sum.abs() {
                term *= x / (s + k);
                sum += term;
                k += 1.0;
            }
            1.0 - sum * (-x + s * x.ln() - ln_gamma).exp()
        } else {
            let tiny = 1e-300;
            let mut b = x + 1.0 - s;
            let mut c = 1.0 / tiny;
            let mut d = 1.0 / b;
            let mut h = d;
            for i in 1..10_000 {
                let an = -(i as f64) * (i as f64 - s);
                b += 2.0;
                d = an * d + b;
                if d.abs() < tiny {
                    d = tiny;
                }
                c = b + an / c;
                if c.abs() < tiny {
                    c = tiny;
                }
                d = 1.0 / d;
                let delta = d * c;
                h *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            (-x + s * x.ln() - ln_gamma).exp() * h
        }
    }

    #[test]
    fn chi2_tail_against_oracle() {
        for dof in 1..=12 {
            for i in 0..60 {
                let x = 0.05 + i as f64 * 0.5;
                let p = chi2_upper_tail(x, dof);
                let o = upper_oracle(dof as f64 / 2.0, x / 2.0);
                assert!((p - o).abs() < 1e-10, "dof={dof} x={x}: {p} vs {o}");
            }
        }
    }

    #[test]
    fn chi2_reference_values() {
        assert_eq!(chi2_upper_tail(0.0, 3), 1.0);
        assert!((chi2_upper_tail(2.0 * 2f64.ln(), 2) - 0.5).abs() < 1e-15);
        // 95% quantile of χ²(3) found by bisection on the oracle CDF
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if upper_oracle(1.5, mid / 2.0) > 0.05 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 7.815).abs() < 1e-3);
        assert!((chi2_upper_tail(7.815, 3) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn ks_on_exact_quantiles() {
        let n = 40;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let r = ks_statistic(&xs, |x| x).unwrap();
        assert!((r.d - 0.5 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn ks_all_zero_against_chi2() {
        let r = ks_statistic(&[0.0; 10], |x| chi2_cdf(x, 3)).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(ks_statistic(&[1.0; 4], |x| x).is_err());
    }

    #[test]
    fn ks_uniform_sample_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let r = ks_statistic(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value > 0.05, "{r:?}");
    }

    #[test]
    fn kolmogorov_tail_reference() {
        // D = 0.091 with n = 120
        let p = kolmogorov_tail(120f64.sqrt() * 0.091);
        assert!((p - 0.272).abs() < 0.01, "{p}");
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 2.0, 3.0]), 1.0);
        assert!(std_dev(&[1.0]).is_nan());
    }
}
