//! Multiscale fractional Brownian motion: parameterization and exact
//! second-order structure.
//!
//! A model with `K` frequency changes has spectral density
//! `σ_i² |ξ|^{-(2H_i+1)}` on the band `ω_i ≤ |ξ| < ω_{i+1}` (with `ω_0 = 0`,
//! `ω_{K+1} = ∞`). Its variogram is
//!
//! ```text
//! V(δ) = 4 Σ_j σ_j² δ^{2H_j} ∫_{δω_j}^{δω_{j+1}} (1 − cos v) v^{−2H_j−1} dv
//! ```
//!
//! Frequencies are raw Fourier variables; no Hz conversion happens anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// `(K, ω, H, σ)` parameterization of a multiscale FBM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    omega: Vec<f64>,
    hurst: Vec<f64>,
    sigma: Vec<f64>,
}

impl ModelSpec {
    /// Builds a model from change frequencies, Hurst exponents and scale
    /// parameters `σ_i` (not squared).
    pub fn new(omega: Vec<f64>, hurst: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if hurst.len() != omega.len() + 1 || sigma.len() != hurst.len() {
            return Err(Error::InvalidArgument(format!(
                "a model with {} change frequencies needs {} Hurst exponents and scales, got {} and {}",
                omega.len(),
                omega.len() + 1,
                hurst.len(),
                sigma.len()
            )));
        }
        if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "change frequencies must be positive, got {w}"
            )));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "change frequencies must be strictly ascending".into(),
            ));
        }
        if let Some(h) = hurst.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "Hurst exponents must lie in (0, 1), got {h}"
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "scale parameters must be positive, got {s}"
            )));
        }
        for i in 0..omega.len() {
            let dh = hurst[i + 1] - hurst[i];
            let ds = sigma[i + 1] - sigma[i];
            if dh * dh + ds * ds <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "regimes {i} and {} are identical; a change frequency must separate distinct (H, σ)",
                    i + 1
                )));
            }
        }
        Ok(Self {
            omega,
            hurst,
            sigma,
        })
    }

    /// Same as [`ModelSpec::new`] with squared scales `σ_i²`.
    pub fn from_sigma2(omega: Vec<f64>, hurst: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if let Some(s) = sigma2.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "squared scales must be positive, got {s}"
            )));
        }
        Self::new(omega, hurst, sigma2.into_iter().map(f64::sqrt).collect())
    }

    /// Single-regime FBM.
    pub fn fbm(hurst: f64, sigma: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![hurst], vec![sigma])
    }

    pub fn changes(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn hurst(&self) -> &[f64] {
        &self.hurst
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma2(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    /// Lower edge of regime `i` (`ω_0 = 0`).
    pub fn lower_edge(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.omega[i - 1]
        }
    }

    /// Upper edge of regime `i` (`ω_{K+1} = ∞`).
    pub fn upper_edge(&self, i: usize) -> f64 {
        self.omega.get(i).copied().unwrap_or(f64::INFINITY)
    }

    /// Index of the regime whose band contains `|xi|`.
    pub fn regime_of(&self, xi: f64) -> usize {
        self.omega.partition_point(|&w| w <= xi.abs())
    }

    /// Checks that consecutive change frequencies are separated by more than
    /// the wavelet band ratio `β/α`, which is required for identifiability.
    pub fn check_separation(&self, band_ratio: f64) -> Result<()> {
        for w in self.omega.windows(2) {
            if w[1] <= band_ratio * w[0] {
                return Err(Error::InvalidArgument(format!(
                    "change frequencies {} and {} are closer than the wavelet band ratio {band_ratio}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Spectral weight `ρ^{-2}(ξ) = σ_i² |ξ|^{-(2H_i+1)}`.
pub fn spectral_weight(model: &ModelSpec, xi: f64) -> Result<f64> {
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::Domain(format!(
            "spectral weight is undefined at ξ = {xi}"
        )));
    }
    let i = model.regime_of(xi);
    let s = model.sigma[i];
    Ok(s * s * xi.abs().powf(-(2.0 * model.hurst[i] + 1.0)))
}

/// Splitting point between the near-zero and oscillatory parts.
const SPLIT: f64 = 1.0;
/// Beyond this argument tails use the asymptotic expansion.
const FAR: f64 = 64.0;
const REL_TOL: f64 = 1e-13;

/// Cumulative integrals of `(1 − cos v) v^{−2H−1}` for one Hurst exponent.
///
/// `cumulative(x) = ∫_0^x`, `total()` is `C(H) = ∫_0^∞`.
#[derive(Debug, Clone)]
pub struct IncrementKernel {
    hurst: f64,
    at_split: f64,
    at_far: f64,
    total: f64,
}

impl IncrementKernel {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hurst exponent must lie in (0, 1), got {hurst}"
            )));
        }
        let mut k = Self {
            hurst,
            at_split: 0.0,
            at_far: 0.0,
            total: 0.0,
        };
        k.at_split = k.near_zero(SPLIT)?;
        k.at_far = k.at_split + k.middle(SPLIT, FAR)?;
        k.total = k.at_far + k.tail(FAR);
        Ok(k)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `C(H)`.
    pub fn total(&self) -> f64 {
        self.total
    }

    fn exponent(&self) -> f64 {
        2.0 * self.hurst + 1.0
    }

    /// `∫_0^x` for `x ≤ 1`, after the substitution `v = w^q`, `q = 1/(2−2H)`,
    /// which removes the `v^{1−2H}` endpoint behaviour.
    fn near_zero(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let q = 1.0 / (2.0 - 2.0 * self.hurst);
        let upper = x.powf(1.0 / q);
        let g = |w: f64| {
            let v = w.powf(q);
            if v == 0.0 {
                return 0.5 * q;
            }
            let s = (0.5 * v).sin();
            // (1 − cos v)/v² written without cancellation
            q * 2.0 * s * s / (v * v)
        };
        Ok(quad::integrate(g, 0.0, upper, REL_TOL, 0.0)?.value)
    }

    fn middle(&self, a: f64, b: f64) -> Result<f64> {
        let p = self.exponent();
        let f = |v: f64| {
            let s = (0.5 * v).sin();
            2.0 * s * s * v.powf(-p)
        };
        Ok(quad::integrate(f, a, b, REL_TOL, 0.0)?.value)
    }

    /// `∫_x^∞ (1 − cos v) v^{−p} dv` for `x ≥ FAR`, from the closed power
    /// part minus the asymptotic expansion of `∫_x^∞ e^{iv} v^{−p} dv`.
    fn tail(&self, x: f64) -> f64 {
        let p = self.exponent();
        let power = x.powf(1.0 - p) / (p - 1.0);
        // ∫_x^∞ e^{iv} v^{−p} dv = i e^{ix} x^{−p} Σ_k (−i)^k (p)_k x^{−k}
        let (mut re, mut im) = (0.0, 0.0);
        let mut term = 1.0;
        for k in 0..200 {
            // (−i)^k cycles 1, −i, −1, i
            match k % 4 {
                0 => re += term,
                1 => im -= term,
                2 => re -= term,
                _ => im += term,
            }
            let next = term * (p + k as f64) / x;
            if next.abs() < 1e-18 * (re.abs() + im.abs()) || next.abs() > term.abs() {
                break;
            }
            term = next;
        }
        let scale = x.powf(-p);
        let (c, s) = (x.cos(), x.sin());
        // real part of i (c + i s)(re + i im)
        let cos_part = -scale * (s * re + c * im);
        power - cos_part
    }

    /// `∫_0^x (1 − cos v) v^{−2H−1} dv`; `x = ∞` gives `C(H)`.
    pub fn cumulative(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("cumulative integral at {x}")));
        }
        if x == f64::INFINITY {
            return Ok(self.total);
        }
        if x <= SPLIT {
            self.near_zero(x)
        } else if x <= FAR {
            Ok(self.at_split + self.middle(SPLIT, x)?)
        } else {
            Ok(self.total - self.tail(x))
        }
    }

    /// `∫_lo^hi (1 − cos v) v^{−2H−1} dv` without subtracting two large
    /// cumulatives when both ends are far out.
    pub fn between(&self, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        if lo >= FAR {
            let upper = if hi == f64::INFINITY {
                0.0
            } else {
                self.tail(hi)
            };
            return Ok(self.tail(lo) - upper);
        }
        if lo >= SPLIT && hi <= FAR {
            return self.middle(lo, hi);
        }
        Ok(self.cumulative(hi)? - self.cumulative(lo)?)
    }
}

/// A model with its per-regime kernels precomputed.
#[derive(Debug, Clone)]
pub struct Variogram {
    model: ModelSpec,
    kernels: Vec<IncrementKernel>,
}

impl Variogram {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let kernels = model
            .hurst
            .iter()
            .map(|&h| IncrementKernel::new(h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: model.clone(),
            kernels,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn kernel(&self, regime: usize) -> &IncrementKernel {
        &self.kernels[regime]
    }

    /// `V(δ) = E(X(t+δ) − X(t))²`.
    pub fn at(&self, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "variogram lag must be a finite nonnegative number, got {delta}"
            )));
        }
        if delta == 0.0 {
            return Ok(0.0);
        }
        let mut v = 0.0;
        for (j, k) in self.kernels.iter().enumerate() {
            let lo = delta * self.model.lower_edge(j);
            let hi = delta * self.model.upper_edge(j);
            let s2 = self.model.sigma[j] * self.model.sigma[j];
            v += s2 * delta.powf(2.0 * k.hurst) * k.between(lo, hi)?;
        }
        Ok(4.0 * v)
    }

    /// `Cov(X(s), X(t)) = ½ (V(s) + V(t) − V(|t − s|))`.
    pub fn covariance(&self, s: f64, t: f64) -> Result<f64> {
        if s < 0.0 || t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "covariance needs nonnegative times, got ({s}, {t})"
            )));
        }
        if s == 0.0 || t == 0.0 {
            return Ok(0.0);
        }
        if s == t {
            return self.at(s);
        }
        Ok(0.5 * (self.at(s)? + self.at(t)? - self.at((t - s).abs())?))
    }
}

/// Variogram of `model` at lag `delta`.
pub fn variogram(model: &ModelSpec, delta: f64) -> Result<f64> {
    Variogram::new(model)?.at(delta)
}

/// Covariance of `X(s)` and `X(t)`.
pub fn covariance(model: &ModelSpec, s: f64, t: f64) -> Result<f64> {
    Variogram::new(model)?.covariance(s, t)
}

/// Which end of the lag axis an asymptote describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoteRegime {
    /// `δ → ∞`, governed by the lowest-frequency band.
    LowFrequency,
    /// `δ → 0`, governed by the highest-frequency band.
    HighFrequency,
}

/// Line `log V ≈ slope · log δ + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub regime: AsymptoteRegime,
    pub slope: f64,
    pub intercept: f64,
}

/// The large-lag and small-lag log-log asymptotes of the variogram.
pub fn variogram_asymptotes(model: &ModelSpec) -> Result<(Asymptote, Asymptote)> {
    let last = model.changes();
    let line = |i: usize, regime| -> Result<Asymptote> {
        let h = model.hurst[i];
        let c = IncrementKernel::new(h)?.total();
        let s2 = model.sigma[i] * model.sigma[i];
        Ok(Asymptote {
            regime,
            slope: 2.0 * h,
            intercept: (4.0 * s2 * c).ln(),
        })
    };
    Ok((
        line(0, AsymptoteRegime::LowFrequency)?,
        line(last, AsymptoteRegime::HighFrequency)?,
    ))
}

/// Uniformly sampled trajectory `X(Δ), …, X(NΔ)`; `X(0) = 0` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    delta: f64,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(delta: f64, values: Vec<f64>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling step must be positive, got {delta}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} is not finite"
            )));
        }
        Ok(Self { delta, values })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observation horizon `T_N = NΔ_N`.
    pub fn horizon(&self) -> f64 {
        self.values.len() as f64 * self.delta
    }

    /// Path multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            delta: self.delta,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// True when every increment between stored samples vanishes.
    pub fn is_degenerate(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v == first)
    }
}

/// `V_N(δ) = (N − δ)^{-1} Σ_i (X_{i+δ} − X_i)²` over the stored samples.
pub fn empirical_variogram(path: &SampledPath, lag: usize) -> Result<f64> {
    let n = path.len();
    if lag == 0 || lag >= n {
        return Err(Error::InvalidArgument(format!(
            "lag must satisfy 1 <= lag < N = {n}, got {lag}"
        )));
    }
    let x = path.values();
    let sum: f64 = x[lag..]
        .iter()
        .zip(x)
        .map(|(b, a)| (b - a) * (b - a))
        .sum();
    Ok(sum / (n - lag) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn three_regime_model() -> ModelSpec {
        ModelSpec::new(vec![0.05, 0.5], vec![0.9, 0.2, 0.5], vec![5.0, 5.0, 5.0]).unwrap()
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ModelSpec::new(vec![], vec![1.0], vec![1.0]).is_err());
        assert!(ModelSpec::new(vec![], vec![0.5], vec![0.0]).is_err());
        assert!(ModelSpec::new(vec![2.0, 1.0], vec![0.5, 0.6, 0.7], vec![1.0; 3]).is_err());
        assert!(ModelSpec::new(vec![1.0], vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(ModelSpec::new(vec![1.0], vec![0.5], vec![1.0]).is_err());
        assert!(ModelSpec::new(vec![1.0], vec![0.5, 0.5], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn separation_check() {
        let m = three_regime_model();
        assert!(m.check_separation(2.0).is_ok());
        assert!(m.check_separation(10.0).is_err());
    }

    #[test]
    fn spectral_weight_values() {
        let m = ModelSpec::fbm(0.5, 1.0).unwrap();
        assert!((spectral_weight(&m, 2.0).unwrap() - 0.25).abs() < 1e-15);
        let f = three_regime_model();
        let expect = 25.0 * 0.1f64.powf(-1.4);
        assert!((spectral_weight(&f, 0.1).unwrap() / expect - 1.0).abs() < 1e-14);
        assert!((spectral_weight(&f, -0.1).unwrap() / expect - 1.0).abs() < 1e-14);
        assert!(spectral_weight(&f, 0.0).is_err());
        // band edges are closed on the left
        assert_eq!(f.regime_of(0.5), 2);
        assert_eq!(f.regime_of(0.4999), 1);
    }

    #[test]
    fn brownian_constant() {
        let k = IncrementKernel::new(0.5).unwrap();
        assert!((k.total() - PI / 2.0).abs() < 1e-11);
        let m = ModelSpec::fbm(0.5, 1.0).unwrap();
        assert!((variogram(&m, 1.0).unwrap() - 2.0 * PI).abs() < 1e-10);
        assert_eq!(variogram(&m, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_is_continuous_across_pieces() {
        for &h in &[0.05, 0.3, 0.7, 0.95] {
            let k = IncrementKernel::new(h).unwrap();
            for &x in &[SPLIT, FAR] {
                let below = k.cumulative(x * (1.0 - 1e-12)).unwrap();
                let above = k.cumulative(x * (1.0 + 1e-12)).unwrap();
                assert!((below - above).abs() < 1e-10 * k.total(), "H={h} x={x}");
            }
            let far = k.between(100.0, 200.0).unwrap();
            let direct = k.cumulative(200.0).unwrap() - k.cumulative(100.0).unwrap();
            assert!((far - direct).abs() < 1e-10 * k.total());
        }
    }

    #[test]
    fn single_regime_doubling() {
        for &h in &[0.1, 0.45, 0.8] {
            let v = Variogram::new(&ModelSpec::fbm(h, 1.3).unwrap()).unwrap();
            for &d in &[1e-3, 0.7, 40.0] {
                let ratio = v.at(2.0 * d).unwrap() / v.at(d).unwrap();
                assert!((ratio / 2f64.powf(2.0 * h) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_edge_cases() {
        let m = three_regime_model();
        let v = Variogram::new(&m).unwrap();
        assert_eq!(v.covariance(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(v.covariance(2.0, 2.0).unwrap(), v.at(2.0).unwrap());
        let a = v.covariance(1.0, 3.0).unwrap();
        let b = v.covariance(3.0, 1.0).unwrap();
        assert_eq!(a, b);
        let bm = Variogram::new(&ModelSpec::fbm(0.5, 1.5).unwrap()).unwrap();
        let c = bm.covariance(0.7, 2.2).unwrap();
        assert!((c - 2.0 * PI * 2.25 * 0.7).abs() < 1e-9);
    }

    #[test]
    fn empirical_variogram_by_hand() {
        let p = SampledPath::new(1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(empirical_variogram(&p, 1).unwrap(), 1.0);
        assert_eq!(empirical_variogram(&p, 2).unwrap(), 0.0);
        assert!(empirical_variogram(&p, 3).is_err());
        assert!(empirical_variogram(&p, 0).is_err());
        let c = SampledPath::new(0.1, vec![2.5; 10]).unwrap();
        assert!(c.is_degenerate());
        for lag in 1..10 {
            assert_eq!(empirical_variogram(&c, lag).unwrap(), 0.0);
        }
    }

    #[test]
    fn path_validation() {
        assert!(SampledPath::new(0.0, vec![1.0, 2.0]).is_err());
        assert!(SampledPath::new(1.0, vec![1.0]).is_err());
        assert!(SampledPath::new(1.0, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn asymptote_slopes() {
        let (low, high) = variogram_asymptotes(&three_regime_model()).unwrap();
        assert_eq!(low.regime, AsymptoteRegime::LowFrequency);
        assert!((low.slope - 1.8).abs() < 1e-15);
        assert!((high.slope - 1.0).abs() < 1e-15);
        let (a, b) = variogram_asymptotes(&ModelSpec::fbm(0.3, 2.0).unwrap()).unwrap();
        assert_eq!(a.slope, b.slope);
        assert_eq!(a.intercept, b.intercept);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn model() -> impl Strategy<Value = ModelSpec> {
            (0usize..=2)
                .prop_flat_map(|k| {
                    (
                        proptest::collection::vec(0.3f64..4.0, k),
                        proptest::collection::vec(0.05f64..0.95, k + 1),
                        proptest::collection::vec(0.2f64..3.0, k + 1),
                    )
                })
                .prop_map(|(steps, h, s)| {
                    let mut omega = Vec::new();
                    let mut x = 0.0;
                    for st in steps {
                        x += st;
                        omega.push(x);
                    }
                    ModelSpec::new(omega, h, s).unwrap()
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn covariance_is_a_valid_kernel(m in model(), s in 0.01f64..20.0, t in 0.01f64..20.0) {
                let v = Variogram::new(&m).unwrap();
                let (vs, vt) = (v.at(s).unwrap(), v.at(t).unwrap());
                let c = v.covariance(s, t).unwrap();
                prop_assert!(vs > 0.0 && vt > 0.0);
                prop_assert!((c - v.covariance(t, s).unwrap()).abs() <= 1e-14 * (vs + vt));
                prop_assert!(c * c <= vs * vt * (1.0 + 1e-10));
            }

            #[test]
            fn variogram_is_quadratic_in_sigma(m in model(), d in 0.01f64..20.0, c in 0.1f64..5.0) {
                let scaled = ModelSpec::new(
                    m.omega().to_vec(),
                    m.hurst().to_vec(),
                    m.sigma().iter().map(|s| s * c).collect(),
                )
                .unwrap();
                let ratio = variogram(&scaled, d).unwrap() / variogram(&m, d).unwrap();
                prop_assert!((ratio / (c * c) - 1.0).abs() < 1e-12);
            }
        }
    }
}
