//! Band-limited analyzing wavelets and the wavelet log-variance spectrum.
//!
//! A [`BandWavelet`] is defined by an even, nonnegative Fourier profile
//! supported on `α ≤ |ξ| ≤ β`, with the convention
//! `ψ(t) = (1/π) ∫_α^β ψ̂(ξ) cos(tξ) dξ`.
//!
//! The empirical coefficient of a sampled path is the Riemann sum
//! `e(a, kΔ) = (Δ/√a) Σ_p ψ(pΔ/a − kΔ) X(pΔ)`. [`empirical_coeff`] evaluates
//! it literally from the time-domain table. [`spectrum`] evaluates the same
//! sum through the Fourier side: writing `ψ` as its inverse transform turns
//! the sum over `p` into an integral over the wavelet band of the path's
//! discrete-time Fourier transform, which is computed by two chirp-z
//! transforms per scale. The band integral uses the trapezoid rule with a
//! step fine enough that its aliases fall beyond the wavelet's reach.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::FrequencyGrid;
use crate::chirp::chirp_sum;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SampledPath};
use crate::quad;

/// Relative level below which the time-domain wavelet counts as zero.
pub const TRUNCATION_LEVEL: f64 = 1e-10;
const MAX_REACH: f64 = 16384.0;
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletKind {
    Bump,
    MeyerShifted,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Bump,
    MeyerShifted,
    /// Interior nodes `(ξ, ψ̂(ξ))`, linearly interpolated, zero at the edges.
    Table(Vec<(f64, f64)>),
}

/// Samples of `ψ` and `ψ'` on `[0, reach]`.
#[derive(Debug, Clone)]
pub struct TimeTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    reach: f64,
    peak: f64,
    tail_level: f64,
}

impl TimeTable {
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Distance beyond which `|ψ|` stays below the truncation level.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// `max |ψ|`.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Largest `|ψ(t)| / max|ψ|` observed past the reach.
    pub fn tail_level(&self) -> f64 {
        self.tail_level
    }

    fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        if t > self.reach {
            return 0.0;
        }
        let x = t / self.step;
        let j = (x as usize).min(self.values.len() - 2);
        let u = x - j as f64;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j] * self.step, self.slopes[j + 1] * self.step);
        // cubic Hermite basis
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }
}

/// Analyzing wavelet whose Fourier transform lives on `[α, β]` in `|ξ|`.
#[derive(Debug)]
pub struct BandWavelet {
    alpha: f64,
    beta: f64,
    profile: Profile,
    table: OnceLock<TimeTable>,
}

impl Clone for BandWavelet {
    fn clone(&self) -> Self {
        Self {
            alpha: self.alpha,
            beta: self.beta,
            profile: self.profile.clone(),
            table: self.table.clone(),
        }
    }
}

impl PartialEq for BandWavelet {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.beta == other.beta && self.profile == other.profile
    }
}

impl BandWavelet {
    /// `ψ̂(ξ) = exp(−1/((|ξ|−α)(β−|ξ|)))` on `α < |ξ| < β`.
    pub fn bump(alpha: f64, beta: f64) -> Result<Self> {
        check_band(alpha, beta)?;
        Ok(Self::with_profile(alpha, beta, Profile::Bump))
    }

    /// Meyer wavelet modulus moved to the band `[π, 2π]`.
    pub fn meyer_shifted() -> Self {
        Self::with_profile(PI, TAU, Profile::MeyerShifted)
    }

    /// Piecewise-linear profile through `nodes`, which must lie strictly
    /// inside `(α, β)`; the profile vanishes at both edges.
    pub fn custom(alpha: f64, beta: f64, nodes: Vec<(f64, f64)>) -> Result<Self> {
        check_band(alpha, beta)?;
        if nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "custom wavelet table is empty".into(),
            ));
        }
        for (i, &(xi, v)) in nodes.iter().enumerate() {
            if !(xi > alpha && xi < beta) {
                return Err(Error::InvalidArgument(format!(
                    "custom wavelet node {i} at ξ = {xi} is outside the open band ({alpha}, {beta})"
                )));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "custom wavelet value at ξ = {xi} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(
                "custom wavelet nodes must be strictly ascending in ξ".into(),
            ));
        }
        if nodes.iter().all(|n| n.1 == 0.0) {
            return Err(Error::InvalidArgument(
                "custom wavelet profile is identically zero".into(),
            ));
        }
        Ok(Self::with_profile(alpha, beta, Profile::Table(nodes)))
    }

    /// Reads a two-column `(ξ, ψ̂(ξ))` text file; `#` starts a comment and
    /// columns may be separated by whitespace or commas.
    pub fn custom_from_file(alpha: f64, beta: f64, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut nodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::Input(format!(
                        "{}:{}: cannot parse `{s}` as a number",
                        path.display(),
                        lineno + 1
                    ))
                })
            };
            if cols.len() != 2 {
                return Err(Error::Input(format!(
                    "{}:{}: expected two columns, found {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            nodes.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::custom(alpha, beta, nodes)
    }

    fn with_profile(alpha: f64, beta: f64, profile: Profile) -> Self {
        Self {
            alpha,
            beta,
            profile,
            table: OnceLock::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `β/α`.
    pub fn band_ratio(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn kind(&self) -> WaveletKind {
        match self.profile {
            Profile::Bump => WaveletKind::Bump,
            Profile::MeyerShifted => WaveletKind::MeyerShifted,
            Profile::Table(_) => WaveletKind::CustomTable,
        }
    }

    /// Fourier profile `ψ̂(ξ)`.
    pub fn psi_hat(&self, xi: f64) -> f64 {
        let x = xi.abs();
        if !(x > self.alpha && x < self.beta) {
            return 0.0;
        }
        match &self.profile {
            Profile::Bump => (-1.0 / ((x - self.alpha) * (self.beta - x))).exp(),
            Profile::MeyerShifted => meyer_modulus(2.0 * x - 4.0 * PI / 3.0),
            Profile::Table(nodes) => {
                let j = nodes.partition_point(|n| n.0 <= x);
                let (x0, y0) = if j == 0 {
                    (self.alpha, 0.0)
                } else {
                    nodes[j - 1]
                };
                let (x1, y1) = nodes.get(j).copied().unwrap_or((self.beta, 0.0));
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Points in `[α, β]` where the profile is not smooth.
    pub(crate) fn profile_breaks(&self) -> Vec<f64> {
        let mut b = vec![self.alpha];
        match &self.profile {
            Profile::Bump => {}
            Profile::MeyerShifted => b.push(4.0 * PI / 3.0),
            Profile::Table(nodes) => b.extend(nodes.iter().map(|n| n.0)),
        }
        b.push(self.beta);
        b
    }

    /// Time-domain table, built on first use.
    pub fn table(&self) -> &TimeTable {
        self.table.get_or_init(|| build_table(self))
    }

    /// `ψ(t)`, cubic-interpolated from the table; zero beyond the reach.
    pub fn psi_time(&self, t: f64) -> f64 {
        self.table().eval(t)
    }

    /// `K_H(ψ) = ∫ ψ̂(u)² |u|^{−2H−1} du`.
    pub fn k_const(&self, hurst: f64) -> Result<f64> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hurst exponent must lie in (0, 1), got {hurst}"
            )));
        }
        let p = 2.0 * hurst + 1.0;
        let f = |u: f64| {
            let v = self.psi_hat(u);
            v * v * u.powf(-p)
        };
        Ok(2.0 * quad::integrate_pieces(f, &self.profile_breaks(), QUAD_TOL, 0.0)?.value)
    }
}

fn check_band(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > alpha) {
        return Err(Error::InvalidArgument(format!(
            "wavelet band needs 0 < α < β, got α = {alpha}, β = {beta}"
        )));
    }
    Ok(())
}

/// Meyer auxiliary polynomial `ν(x) = x⁴(35 − 84x + 70x² − 20x³)` on [0, 1].
fn meyer_nu(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
}

/// `|ψ̂_Meyer(u)|`, supported on `[2π/3, 8π/3]`.
fn meyer_modulus(u: f64) -> f64 {
    let u = u.abs();
    if u <= 2.0 * PI / 3.0 || u >= 8.0 * PI / 3.0 {
        0.0
    } else if u <= 4.0 * PI / 3.0 {
        (FRAC_PI_2 * meyer_nu(3.0 * u / TAU - 1.0)).sin()
    } else {
        (FRAC_PI_2 * meyer_nu(3.0 * u / (2.0 * TAU) - 1.0)).cos()
    }
}

/// Evaluates `ψ` and `ψ'` on `[0, span]` with step `step` by the trapezoid
/// rule over the band, using a chirp-z transform.
fn sample_time_domain(w: &BandWavelet, step: f64, span: f64) -> (Vec<f64>, Vec<f64>) {
    // aliases of the band trapezoid rule repeat with period 4·span
    let xi_step = TAU / (4.0 * span);
    let nodes = ((w.beta - w.alpha) / xi_step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..nodes).map(|n| w.alpha + n as f64 * xi_step).collect();
    let weights: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(w.psi_hat(x), 0.0)).collect();
    let moments: Vec<Complex64> = xs
        .iter()
        .zip(&weights)
        .map(|(&x, v)| v * x)
        .collect();
    let count = (span / step).ceil() as usize + 1;
    let theta = step * xi_step;
    let s0 = chirp_sum(&weights, theta, count);
    let s1 = chirp_sum(&moments, theta, count);
    let scale = xi_step / PI;
    let mut values = Vec::with_capacity(count);
    let mut slopes = Vec::with_capacity(count);
    for j in 0..count {
        let rot = Complex64::from_polar(1.0, j as f64 * step * w.alpha);
        values.push(scale * (rot * s0[j]).re);
        slopes.push(-scale * (rot * s1[j]).im);
    }
    (values, slopes)
}

fn build_table(w: &BandWavelet) -> TimeTable {
    let step = TAU / (64.0 * w.beta);
    let mut span = 128.0;
    loop {
        let (values, slopes) = sample_time_domain(w, step, span);
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = TRUNCATION_LEVEL * peak;
        let half = values.len() / 2;
        let tail = values[half..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail < threshold || span >= MAX_REACH {
            let last = values
                .iter()
                .rposition(|v| v.abs() >= threshold)
                .unwrap_or(0);
            // keep a couple of nodes past the last significant sample
            let keep = (last + 3).min(values.len());
            let reach = (keep - 1) as f64 * step;
            let tail_level = values[keep..]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                / peak;
            if span >= MAX_REACH && tail >= threshold {
                log::warn!(
                    "wavelet time table truncated at reach {reach}; tail level {:.2e}",
                    tail / peak
                );
            }
            return TimeTable {
                step,
                values: values[..keep.max(2)].to_vec(),
                slopes: slopes[..keep.max(2)].to_vec(),
                reach,
                peak,
                tail_level,
            };
        }
        span *= 2.0;
    }
}

/// Theoretical wavelet variance `𝓘₁(a) = a ∫ |ψ̂(au)|² ρ^{−2}(u) du`.
pub fn theoretical_variance(model: &ModelSpec, w: &BandWavelet, a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {a}")));
    }
    let (lo, hi) = (w.alpha / a, w.beta / a);
    let mut breaks: Vec<f64> = w.profile_breaks().iter().map(|b| b / a).collect();
    breaks.extend(model.omega().iter().copied().filter(|&x| x > lo && x < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let hurst = model.hurst();
    let sigma = model.sigma();
    let f = |u: f64| {
        let v = w.psi_hat(a * u);
        if v == 0.0 {
            return 0.0;
        }
        let i = model.regime_of(u);
        v * v * sigma[i] * sigma[i] * u.powf(-(2.0 * hurst[i] + 1.0))
    };
    Ok(2.0 * a * quad::integrate_pieces(f, &breaks, QUAD_TOL, 0.0)?.value)
}

/// Shift indices `D_N(a) = {⌊rN/a⌋, …, ⌊(1−r)N/a⌋}`.
pub fn shift_range(n: usize, a: f64, r: f64) -> (usize, usize) {
    let n = n as f64;
    ((r * n / a).floor() as usize, ((1.0 - r) * n / a).floor() as usize)
}

/// Literal Riemann-sum coefficient `e(a, kΔ)`, restricted to samples where
/// the tabulated wavelet is nonzero. `X(0) = 0` contributes nothing.
pub fn empirical_coeff(path: &SampledPath, w: &BandWavelet, a: f64, k: usize) -> f64 {
    let delta = path.delta();
    let reach = w.table().reach();
    let center = k as f64 * a;
    let half = reach * a / delta;
    let x = path.values();
    let first = ((center - half).floor().max(1.0)) as usize;
    let last = ((center + half).ceil() as usize).min(x.len());
    let mut sum = 0.0;
    for p in first..=last {
        sum += w.psi_time(p as f64 * delta / a - k as f64 * delta) * x[p - 1];
    }
    delta / a.sqrt() * sum
}

/// Log empirical wavelet variances on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSpectrum {
    pub grid: FrequencyGrid,
    /// `Y_k = log J_N(1/f_k)`.
    pub y: Vec<f64>,
    pub r: f64,
    /// `|D_N(1/f_k)|`.
    pub counts: Vec<usize>,
}

impl WaveletSpectrum {
    pub fn log_f(&self) -> Vec<f64> {
        self.grid.f.iter().map(|f| f.ln()).collect()
    }
}

/// Checks the trimming fraction `r ∈ (0, 1/3)`.
pub fn check_trim(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "trimming fraction r must lie in (0, 1/3), got {r}"
        )));
    }
    Ok(())
}

/// All coefficients `e(a, kΔ)` for `k ∈ [k_first, k_last]`.
pub fn coefficients(
    path: &SampledPath,
    w: &BandWavelet,
    a: f64,
    k_first: usize,
    k_last: usize,
) -> Vec<f64> {
    let n = path.len();
    let delta = path.delta();
    let count = k_last + 1 - k_first;
    let reach = w.table().reach();
    // period (in samples) of the trapezoid aliases; must exceed the support
    // of the sum plus the wavelet reach
    let period = 1.25 * (n as f64 + 2.0) + reach * a / delta;
    let step = TAU / period;
    let lo = w.alpha * delta / a;
    let hi = w.beta * delta / a;
    let nodes = ((hi - lo) / step).ceil() as usize + 1;

    // DTFT of the path at ω_m = lo + m·step:  Σ_{p=1}^{N} X_p e^{i p ω_m}
    let x = path.values();
    let src: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(q, &v)| Complex64::from_polar(v, q as f64 * lo))
        .collect();
    let dtft = chirp_sum(&src, step, nodes);

    let shift_rate = a * step;
    let weighted: Vec<Complex64> = dtft
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let omega = lo + m as f64 * step;
            let weight = w.psi_hat(a * omega / delta);
            // e^{iω} from p = q + 1, and the e^{−i a·step·m·k_first} offset
            let phase = omega - (m as f64) * shift_rate * k_first as f64;
            t * weight * Complex64::from_polar(1.0, phase)
        })
        .collect();
    let sums = chirp_sum(&weighted, -shift_rate, count);
    let scale = (a / (PI * delta)) * step * delta / a.sqrt();
    sums.iter()
        .enumerate()
        .map(|(j, s)| {
            let k = (k_first + j) as f64;
            scale * (s * Complex64::from_polar(1.0, -k * a * lo)).re
        })
        .collect()
}

/// `Y_k = log J_N(1/f_k)` with `J_N(a) = |D_N(a)|^{-1} Σ_{k∈D_N(a)} e(a, kΔ)²`.
pub fn spectrum(
    path: &SampledPath,
    w: &BandWavelet,
    grid: &FrequencyGrid,
    r: f64,
) -> Result<WaveletSpectrum> {
    check_trim(r)?;
    if path.is_degenerate() {
        return Err(Error::DegeneratePath(
            "all samples are equal; wavelet variances vanish".into(),
        ));
    }
    let n = path.len();
    let rows: Vec<Result<(f64, usize)>> = grid
        .f
        .par_iter()
        .map(|&f| {
            let a = 1.0 / f;
            let (k0, k1) = shift_range(n, a, r);
            if k1 < k0 {
                return Err(Error::Analysis(format!(
                    "no shifts available at frequency {f}; raise f_min (N·f_min/β should be at least 10)"
                )));
            }
            let e = coefficients(path, w, a, k0, k1);
            let j = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
            if !(j > 0.0 && j.is_finite()) {
                return Err(Error::DegeneratePath(format!(
                    "empirical wavelet variance is {j} at frequency {f}"
                )));
            }
            Ok((j.ln(), e.len()))
        })
        .collect();
    let mut y = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for row in rows {
        let (v, c) = row?;
        y.push(v);
        counts.push(c);
    }
    Ok(WaveletSpectrum {
        grid: grid.clone(),
        y,
        r,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> BandWavelet {
        BandWavelet::bump(5.0, 10.0).unwrap()
    }

    #[test]
    fn bump_profile_values() {
        let w = bump();
        assert_eq!(w.psi_hat(11.0), 0.0);
        assert_eq!(w.psi_hat(5.0), 0.0);
        assert_eq!(w.psi_hat(10.0), 0.0);
        assert!((w.psi_hat(7.5) - (-0.16f64).exp()).abs() < 1e-15);
        for &x in &[5.3, 6.1, 9.99, 7.0] {
            assert_eq!(w.psi_hat(x), w.psi_hat(-x));
        }
    }

    #[test]
    fn bad_bands_rejected() {
        assert!(BandWavelet::bump(0.0, 1.0).is_err());
        assert!(BandWavelet::bump(2.0, 1.0).is_err());
        assert!(BandWavelet::custom(1.0, 2.0, vec![(1.0, 0.5)]).is_err());
        assert!(BandWavelet::custom(1.0, 2.0, vec![(1.6, 0.5), (1.5, 0.2)]).is_err());
        assert!(BandWavelet::custom(1.0, 2.0, vec![(1.5, -0.5)]).is_err());
    }

    #[test]
    fn meyer_profile_shape() {
        let w = BandWavelet::meyer_shifted();
        assert_eq!(w.band_ratio(), 2.0);
        assert_eq!(w.psi_hat(PI), 0.0);
        assert_eq!(w.psi_hat(TAU), 0.0);
        // plateau of the Meyer modulus maps to 4π/3
        assert!((w.psi_hat(4.0 * PI / 3.0) - 1.0).abs() < 1e-14);
        assert!(w.psi_hat(1.2 * PI) > 0.0);
    }

    #[test]
    fn custom_profile_interpolates() {
        let w = BandWavelet::custom(1.0, 2.0, vec![(1.25, 1.0), (1.75, 1.0)]).unwrap();
        assert!((w.psi_hat(1.125) - 0.5).abs() < 1e-15);
        assert!((w.psi_hat(1.5) - 1.0).abs() < 1e-15);
        assert!((w.psi_hat(-1.875) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn k_const_for_indicator_like_profiles() {
        // a near-indicator of [1, 2] built from a very steep trapezoid
        let eps = 1e-7;
        let w = BandWavelet::custom(1.0, 2.0, vec![(1.0 + eps, 1.0), (2.0 - eps, 1.0)]).unwrap();
        let k = w.k_const(0.5).unwrap();
        assert!((k - 1.0).abs() < 1e-6, "{k}");
        let k = w.k_const(0.25).unwrap();
        assert!((k - 4.0 * (1.0 - 0.5f64.sqrt())).abs() < 1e-6, "{k}");
    }

    #[test]
    fn time_domain_is_even_with_positive_center() {
        let w = bump();
        let t = w.table();
        assert!(t.reach() > 10.0);
        assert!(t.tail_level() < TRUNCATION_LEVEL);
        assert!(w.psi_time(0.0) > 0.0);
        for &x in &[0.37, 3.3, 17.9] {
            assert_eq!(w.psi_time(x), w.psi_time(-x));
        }
        assert_eq!(w.psi_time(t.reach() + 1.0), 0.0);
    }

    #[test]
    fn time_domain_matches_direct_quadrature() {
        let w = bump();
        for &t in &[0.0, 0.123, 1.0, 2.71, 9.4, 30.5] {
            let direct = quad::integrate(
                |x| w.psi_hat(x) * (t * x).cos(),
                5.0,
                10.0,
                1e-11,
                1e-16,
            )
            .unwrap()
            .value
                / PI;
            assert!(
                (w.psi_time(t) - direct).abs() < 1e-6 * w.table().peak(),
                "t={t}: {} vs {direct}",
                w.psi_time(t)
            );
        }
    }

    #[test]
    fn zero_path_is_degenerate() {
        let w = bump();
        let p = SampledPath::new(0.03, vec![0.0; 600]).unwrap();
        let grid = crate::changepoint::build_grid(600, 0.03, 0.5, 20.0, &w).unwrap().grid;
        assert!(matches!(
            spectrum(&p, &w, &grid, 0.1),
            Err(Error::DegeneratePath(_))
        ));
    }

    #[test]
    fn trim_fraction_checked() {
        assert!(check_trim(0.0).is_err());
        assert!(check_trim(1.0 / 3.0).is_err());
        assert!(check_trim(0.1).is_ok());
    }

    #[test]
    fn vanishing_moments() {
        for w in [bump(), BandWavelet::meyer_shifted()] {
            let t = w.table();
            let h = t.step();
            let n = (t.reach() / h).floor() as i64;
            let (mut m0, mut m1) = (0.0, 0.0);
            for j in -n..=n {
                let x = j as f64 * h;
                m0 += w.psi_time(x) * h;
                m1 += x * w.psi_time(x) * h;
            }
            assert!(m0.abs() < 1e-8, "{m0}");
            assert!(m1.abs() < 1e-8, "{m1}");
        }
    }

    #[test]
    fn constant_and_linear_paths_are_annihilated() {
        let w = bump();
        let delta = 0.01;
        let n = 8000;
        let a = 0.05;
        // center p = k·a at the middle of the path, window ±reach·a/Δ inside it
        let k = 80_000;
        assert!(w.table().reach() * a / delta < 3999.0);
        let c = 3.0;
        let flat = SampledPath::new(delta, vec![c; n]).unwrap();
        let line = SampledPath::new(delta, (1..=n).map(|p| c * p as f64 * delta).collect()).unwrap();
        let bound = 1e-3 * c * a.sqrt();
        assert!(empirical_coeff(&flat, &w, a, k).abs() <= bound);
        assert!(empirical_coeff(&line, &w, a, k).abs() <= bound);
    }

    #[test]
    fn fourier_route_matches_riemann_sum() {
        let w = bump();
        let delta = 0.1;
        let mut steps = vec![0.0; 600];
        crate::rng::NormalStream::new(4, 0).fill(&mut steps);
        let values: Vec<f64> = steps
            .iter()
            .scan(0.0, |x, z| {
                *x += z;
                Some(*x)
            })
            .collect();
        let path = SampledPath::new(delta, values).unwrap();
        for &a in &[0.05, 0.2, 1.0, 3.0] {
            let (k0, k1) = shift_range(path.len(), a, 0.1);
            let fast = coefficients(&path, &w, a, k0, k1);
            let scale = fast.iter().map(|v| v * v).sum::<f64>().sqrt() / (fast.len() as f64).sqrt();
            for (j, k) in (k0..=k1).enumerate().step_by(((k1 - k0) / 7).max(1)) {
                let slow = empirical_coeff(&path, &w, a, k);
                assert!(
                    (fast[j] - slow).abs() < 1e-6 * scale,
                    "a={a} k={k}: {} vs {slow}",
                    fast[j]
                );
            }
        }
    }

    #[test]
    fn k_const_against_trapezoid() {
        let w = bump();
        for &h in &[0.1, 0.35, 0.6, 0.9] {
            let nodes = 1_000_000;
            let step = 5.0 / nodes as f64;
            let mut sum = 0.0;
            for i in 1..nodes {
                let u = 5.0 + i as f64 * step;
                let v = w.psi_hat(u);
                sum += v * v * u.powf(-2.0 * h - 1.0);
            }
            let oracle = 2.0 * sum * step;
            let k = w.k_const(h).unwrap();
            assert!(((k - oracle) / oracle).abs() < 1e-8, "H={h}: {k} vs {oracle}");
        }
    }

    #[test]
    fn fbm_variance_is_a_power_of_scale() {
        let w = bump();
        let (h, sigma) = (0.35, 1.7);
        let model = ModelSpec::fbm(h, sigma).unwrap();
        let kh = w.k_const(h).unwrap();
        let mut logs = Vec::new();
        for i in 0..10 {
            let a = 0.05 * 1.9f64.powi(i);
            let v = theoretical_variance(&model, &w, a).unwrap();
            let exact = a.powf(2.0 * h + 1.0) * sigma * sigma * kh;
            assert!(((v - exact) / exact).abs() < 1e-6, "a={a}");
            logs.push((a.ln(), v.ln()));
        }
        // affine in log a with slope 2H + 1
        for p in logs.windows(2) {
            let slope = (p[1].1 - p[0].1) / (p[1].0 - p[0].0);
            assert!((slope - (2.0 * h + 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn multiscale_variance_follows_each_regime() {
        let w = bump();
        let model = ModelSpec::from_sigma2(vec![5.0], vec![0.2, 0.7], vec![10.0, 5.0]).unwrap();
        let pure = |i: usize, a: f64| {
            let m = ModelSpec::fbm(model.hurst()[i], model.sigma()[i]).unwrap();
            theoretical_variance(&m, &w, a).unwrap()
        };
        for i in 0..40 {
            let f = 0.05 * 1.15f64.powi(i);
            let a = 1.0 / f;
            let v = theoretical_variance(&model, &w, a).unwrap();
            let (v0, v1) = (pure(0, a), pure(1, a));
            if 10.0 * f <= 5.0 {
                assert!(((v - v0) / v0).abs() < 1e-9, "f={f}");
            } else if 5.0 * f >= 5.0 {
                assert!(((v - v1) / v1).abs() < 1e-9, "f={f}");
            } else {
                assert!(v >= v0.min(v1) * (1.0 - 1e-9) && v <= v0.max(v1) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn fbm_spectrum_slope() {
        use crate::simulate::PathSimulator;
        let w = bump();
        let (n, delta) = (3000, 0.03);
        let model = ModelSpec::fbm(0.6, 1.0).unwrap();
        let sim = PathSimulator::new(&model, n, delta, 8192).unwrap();
        let grid = crate::changepoint::build_grid(n, delta, 0.05, 20.0, &w).unwrap().grid;
        let mut slopes = Vec::new();
        for rep in 0..3 {
            let spec = spectrum(&sim.sample(11, rep), &w, &grid, 0.1).unwrap();
            let (slope, _) = crate::changepoint::ols_line(&spec.log_f(), &spec.y).unwrap();
            slopes.push(slope);
        }
        let mean = slopes.iter().sum::<f64>() / 3.0;
        assert!((mean + 2.2).abs() < 0.15, "{slopes:?}");
    }

    #[test]
    fn shift_range_floors() {
        assert_eq!(shift_range(6000, 200.0, 0.1), (3, 27));
        assert_eq!(shift_range(6000, 0.25, 0.1), (2400, 21600));
    }
}
