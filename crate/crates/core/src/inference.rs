//! Per-segment estimation of `(H, σ²)`, the asymptotic covariance of the
//! log-variances at the refinement points, FGLS re-estimation, the `T_K`
//! goodness-of-fit statistic and the recursive choice of the number of
//! changes.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::changepoint::{self, FrequencyGrid, Segmentation};
use crate::error::{Error, Result};
use crate::model::SampledPath;
use crate::quad;
use crate::stats::chi2_upper_tail;
use crate::wavelet::{self, BandWavelet, WaveletSpectrum};

pub const HURST_FLOOR: f64 = 0.05;
pub const HURST_CEIL: f64 = 0.95;
/// Largest condition number of `Σ̂` accepted without regularization.
pub const CONDITION_LIMIT: f64 = 1e12;
const RIDGE: f64 = 1e-10;
const QUAD_TOL: f64 = 1e-11;

/// Prefactor of the covariance of the limiting log-variance process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// `2/(1−2r)`: accounts for the fraction of shifts kept by trimming.
    #[default]
    Trimmed,
    /// `2`.
    Plain,
}

impl SigmaConvention {
    pub fn prefactor(self, r: f64) -> f64 {
        match self {
            SigmaConvention::Trimmed => 2.0 / (1.0 - 2.0 * r),
            SigmaConvention::Plain => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaConvention::Trimmed => "trimmed",
            SigmaConvention::Plain => "plain",
        }
    }
}

impl std::str::FromStr for SigmaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trimmed" => Ok(SigmaConvention::Trimmed),
            "plain" => Ok(SigmaConvention::Plain),
            other => Err(Error::Config(format!(
                "unknown sigma convention `{other}` (expected `trimmed` or `plain`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Ols,
    Fgls,
}

/// Regression estimate on the `m` refinement points of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEstimate {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub sigma2: f64,
    /// `−(2H + 1)` before clamping.
    pub slope: f64,
    /// `log σ² + log K_H(ψ)` before clamping.
    pub intercept: f64,
    /// `H` was moved into `[0.05, 0.95]`.
    pub clamped: bool,
    pub points: Vec<usize>,
    pub freqs: Vec<f64>,
    /// Covariance `Σ̂` used (or attached) for this segment; empty when none.
    pub sigma: Vec<Vec<f64>>,
    /// Asymptotic covariance of `(slope, intercept)` scaled by `NΔ`.
    pub gamma: [[f64; 2]; 2],
    pub flavor: Flavor,
    /// `Σ̂` was regularized by a ridge before inversion.
    pub ridge: bool,
}

/// `(Ĥ, clamped, σ̂²)` from a fitted line.
pub fn recover(slope: f64, intercept: f64, w: &BandWavelet) -> Result<(f64, bool, f64)> {
    let raw = -(slope + 1.0) / 2.0;
    if !raw.is_finite() || !intercept.is_finite() {
        return Err(Error::Analysis(format!(
            "non-finite regression line (slope {slope}, intercept {intercept})"
        )));
    }
    let h = raw.clamp(HURST_FLOOR, HURST_CEIL);
    let sigma2 = (intercept - w.k_const(h)?.ln()).exp();
    Ok((h, h != raw, sigma2))
}

fn design(grid: &FrequencyGrid, y: &[f64], points: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 regression points, got {}",
            points.len()
        )));
    }
    if let Some(&bad) = points.iter().find(|&&i| i >= grid.len() || i >= y.len()) {
        return Err(Error::InvalidArgument(format!(
            "regression index {bad} is outside the grid"
        )));
    }
    Ok((
        points.iter().map(|&i| grid.f[i].ln()).collect(),
        points.iter().map(|&i| y[i]).collect(),
    ))
}

/// Ordinary least squares on the refinement points.
pub fn ols_estimate(
    y: &[f64],
    grid: &FrequencyGrid,
    points: &[usize],
    w: &BandWavelet,
) -> Result<SegmentEstimate> {
    let (x, yy) = design(grid, y, points)?;
    let (slope, intercept) = changepoint::ols_line(&x, &yy)?;
    let (hurst, clamped, sigma2) = recover(slope, intercept, w)?;
    Ok(SegmentEstimate {
        hurst,
        sigma2,
        slope,
        intercept,
        clamped,
        points: points.to_vec(),
        freqs: points.iter().map(|&i| grid.f[i]).collect(),
        sigma: Vec::new(),
        gamma: [[f64::NAN; 2]; 2],
        flavor: Flavor::Ols,
        ridge: false,
    })
}

/// `Σ(H)` at frequencies `freqs`:
/// `s_kl = c·(g_k g_l)^{2H} ∫ (∫ ψ̂(ξ/g_k)ψ̂(ξ/g_l)|ξ|^{−(2H+1)} e^{−iuξ} dξ)² du / K_H²`
/// with `c` the convention prefactor. The outer integral is reduced by
/// Parseval to `2π ∫ ψ̂²(ξ/g_k)ψ̂²(ξ/g_l)|ξ|^{−2(2H+1)} dξ`, which vanishes
/// exactly when the two bands do not overlap.
pub fn sigma_matrix(
    hurst: f64,
    freqs: &[f64],
    w: &BandWavelet,
    r: f64,
    convention: SigmaConvention,
) -> Result<Vec<Vec<f64>>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Hurst exponent must lie in (0, 1), got {hurst}"
        )));
    }
    wavelet::check_trim(r)?;
    if freqs.iter().any(|g| !(g.is_finite() && *g > 0.0)) || freqs.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument(
            "frequencies must be positive and strictly ascending".into(),
        ));
    }
    let k_h = w.k_const(hurst)?;
    let p = 2.0 * (2.0 * hurst + 1.0);
    let pref = convention.prefactor(r);
    let m = freqs.len();
    let mut s = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in k..m {
            let (gk, gl) = (freqs[k], freqs[l]);
            let value = match overlap(w, gk, gl) {
                None => 0.0,
                Some((lo, hi)) => {
                    let mut breaks = vec![lo];
                    for b in w.profile_breaks() {
                        for g in [gk, gl] {
                            let x = b * g;
                            if x > lo && x < hi {
                                breaks.push(x);
                            }
                        }
                    }
                    breaks.push(hi);
                    breaks.sort_by(f64::total_cmp);
                    breaks.dedup();
                    let f = |xi: f64| {
                        let v = w.psi_hat(xi / gk) * w.psi_hat(xi / gl);
                        v * v * xi.powf(-p)
                    };
                    let inner = quad::integrate_pieces(f, &breaks, QUAD_TOL, 0.0)?.value;
                    pref * (gk * gl).powf(2.0 * hurst) * TAU * 2.0 * inner / (k_h * k_h)
                }
            };
            s[k][l] = value;
            s[l][k] = value;
        }
    }
    Ok(s)
}

/// Open overlap `(α·max g, β·min g)` of the two Fourier supports.
pub fn overlap(w: &BandWavelet, gk: f64, gl: f64) -> Option<(f64, f64)> {
    let lo = w.alpha() * gk.max(gl);
    let hi = w.beta() * gk.min(gl);
    (lo < hi).then_some((lo, hi))
}

/// Lower Cholesky factor of a small dense SPD matrix.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let root = d.sqrt();
        l[j][j] = root;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / root;
        }
    }
    Some(l)
}

/// `L⁻¹ v` by forward substitution.
fn forward(l: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    z
}

/// Condition number of a symmetric matrix from its eigenvalues.
fn condition(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = faer::Mat::from_fn(n, n, |i, j| a[i][j]);
    match m.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(ev) => {
            let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().copied().fold(0.0f64, |u, v| u.max(v.abs()));
            if lo <= 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// `Σ̂` ready for whitening, ridged when its condition number is too large.
struct Whitener {
    sigma: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    ridge: bool,
}

impl Whitener {
    fn new(sigma: &[Vec<f64>]) -> Result<Self> {
        let m = sigma.len();
        if m == 0 || sigma.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidArgument("Σ must be a non-empty square matrix".into()));
        }
        for i in 0..m {
            for j in 0..i {
                if sigma[i][j] != sigma[j][i] {
                    return Err(Error::InvalidArgument("Σ must be symmetric".into()));
                }
            }
        }
        let cond = condition(sigma);
        if cond <= CONDITION_LIMIT {
            if let Some(lower) = cholesky(sigma) {
                return Ok(Self {
                    sigma: sigma.to_vec(),
                    lower,
                    ridge: false,
                });
            }
        }
        let trace: f64 = (0..m).map(|i| sigma[i][i]).sum();
        let eps = RIDGE * trace / m as f64;
        let mut ridged = sigma.to_vec();
        for (i, row) in ridged.iter_mut().enumerate() {
            row[i] += eps;
        }
        let ridged_cond = condition(&ridged);
        match cholesky(&ridged) {
            Some(lower) if ridged_cond <= CONDITION_LIMIT => Ok(Self {
                sigma: ridged,
                lower,
                ridge: true,
            }),
            _ => Err(Error::IllConditioned { condition: cond }),
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        forward(&self.lower, v)
    }
}

fn inverse2(a: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(Error::Analysis("singular 2×2 normal equations".into()));
    }
    Ok([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

fn gram(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// OLS sandwich `(X'X)⁻¹ X'ΣX (X'X)⁻¹`.
pub fn ols_covariance(x: &[f64], sigma: &[Vec<f64>]) -> Result<[[f64; 2]; 2]> {
    let ones = vec![1.0; x.len()];
    let cols = [x, &ones[..]];
    let xtx = [
        [gram(cols[0], cols[0]), gram(cols[0], cols[1])],
        [gram(cols[1], cols[0]), gram(cols[1], cols[1])],
    ];
    let inv = inverse2(xtx)?;
    let mut mid = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut s = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    s += cols[a][i] * sigma[i][j] * cols[b][j];
                }
            }
            mid[a][b] = s;
        }
    }
    let mut out = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    out[a][b] += inv[a][c] * mid[c][d] * inv[d][b];
                }
            }
        }
    }
    Ok(out)
}

/// Generalized least squares on the refinement points with covariance
/// `sigma`; the returned estimate carries the `Σ̂` actually inverted.
pub fn fgls_estimate(
    y: &[f64],
    grid: &FrequencyGrid,
    points: &[usize],
    sigma: &[Vec<f64>],
    w: &BandWavelet,
) -> Result<SegmentEstimate> {
    let (x, yy) = design(grid, y, points)?;
    if sigma.len() != points.len() {
        return Err(Error::InvalidArgument(format!(
            "Σ is {}×{} but there are {} points",
            sigma.len(),
            sigma.len(),
            points.len()
        )));
    }
    let wh = Whitener::new(sigma)?;
    let wx = wh.apply(&x);
    let w1 = wh.apply(&vec![1.0; x.len()]);
    let wy = wh.apply(&yy);
    let normal = [[gram(&wx, &wx), gram(&wx, &w1)], [gram(&w1, &wx), gram(&w1, &w1)]];
    let gamma = inverse2(normal)?;
    let rhs = [gram(&wx, &wy), gram(&w1, &wy)];
    let slope = gamma[0][0] * rhs[0] + gamma[0][1] * rhs[1];
    let intercept = gamma[1][0] * rhs[0] + gamma[1][1] * rhs[1];
    let (hurst, clamped, sigma2) = recover(slope, intercept, w)?;
    Ok(SegmentEstimate {
        hurst,
        sigma2,
        slope,
        intercept,
        clamped,
        points: points.to_vec(),
        freqs: points.iter().map(|&i| grid.f[i]).collect(),
        sigma: wh.sigma,
        gamma,
        flavor: Flavor::Fgls,
        ridge: wh.ridge,
    })
}

/// `T_K = NΔ Σ_j ‖Ỹ_j − X̃_j λ_j‖²_{Σ̂_j}` and its degrees of freedom
/// `(K+1)(m−2)`.
pub fn test_statistic(
    y: &[f64],
    grid: &FrequencyGrid,
    segments: &[SegmentEstimate],
    n: usize,
    delta: f64,
) -> Result<(f64, usize)> {
    let m = segments.first().map_or(0, |s| s.points.len());
    if m < 3 || segments.iter().any(|s| s.points.len() != m) {
        return Err(Error::InvalidArgument(format!(
            "every segment needs the same m ≥ 3 points (got m = {m})"
        )));
    }
    let mut total = 0.0;
    for s in segments {
        let (x, yy) = design(grid, y, &s.points)?;
        let resid: Vec<f64> = x
            .iter()
            .zip(&yy)
            .map(|(xi, yi)| yi - s.slope * xi - s.intercept)
            .collect();
        let wh = Whitener::new(&s.sigma)?;
        let z = wh.apply(&resid);
        total += gram(&z, &z);
    }
    Ok((n as f64 * delta * total, segments.len() * (m - 2)))
}

/// Settings shared by every order tested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub m: usize,
    pub level: f64,
    pub convention: SigmaConvention,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            m: 5,
            level: 0.05,
            convention: SigmaConvention::Trimmed,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::InvalidArgument(format!(
                "m must be at least 3, got {}",
                self.m
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Complete analysis at a fixed number of changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "K")]
    pub k: usize,
    pub segmentation: Segmentation,
    pub omegas: Vec<f64>,
    /// FGLS estimates.
    pub segments: Vec<SegmentEstimate>,
    /// OLS estimates on the same points, with `Σ̂` and the sandwich covariance.
    pub ols: Vec<SegmentEstimate>,
    #[serde(rename = "T_stat")]
    pub t_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub accepted: bool,
    pub level: f64,
    pub m: usize,
    pub r: f64,
    pub sigma_convention: SigmaConvention,
}

/// Runs segmentation, refinement, OLS, `Σ̂`, FGLS and the test for `k`
/// changes. Errors are tagged with the failing stage.
pub fn fit_order(
    spec: &WaveletSpectrum,
    w: &BandWavelet,
    k: usize,
    opts: &FitOptions,
    n: usize,
    delta: f64,
) -> Result<FitResult> {
    opts.validate()?;
    let grid = &spec.grid;
    let y = &spec.y;
    let seg = changepoint::minimize_q(y, grid, k).map_err(|e| e.at_stage("segmentation", k))?;
    let omegas = changepoint::omega_hat(grid, &seg);
    let points =
        changepoint::refine_points(&seg.t, grid.tau, opts.m).map_err(|e| e.at_stage("refine", k))?;
    for (j, pair) in points.windows(2).enumerate() {
        let last = *pair[0].last().expect("m >= 3");
        let first = pair[1][0];
        if grid.f[first] / grid.f[last] < w.band_ratio() {
            return Err(Error::Analysis(format!(
                "refinement points of segments {j} and {} overlap in band",
                j + 1
            ))
            .at_stage("refine", k));
        }
    }
    let mut ols = Vec::with_capacity(k + 1);
    let mut fgls = Vec::with_capacity(k + 1);
    for pts in &points {
        let mut o = ols_estimate(y, grid, pts, w).map_err(|e| e.at_stage("ols", k))?;
        let sigma = sigma_matrix(o.hurst, &o.freqs, w, spec.r, opts.convention)
            .map_err(|e| e.at_stage("sigma", k))?;
        let x: Vec<f64> = o.freqs.iter().map(|f| f.ln()).collect();
        o.gamma = ols_covariance(&x, &sigma).map_err(|e| e.at_stage("ols", k))?;
        let g = fgls_estimate(y, grid, pts, &sigma, w).map_err(|e| e.at_stage("fgls", k))?;
        o.sigma = sigma;
        ols.push(o);
        fgls.push(g);
    }
    let (t_stat, dof) =
        test_statistic(y, grid, &fgls, n, delta).map_err(|e| e.at_stage("test", k))?;
    let p_value = chi2_upper_tail(t_stat, dof);
    Ok(FitResult {
        k,
        segmentation: seg,
        omegas,
        segments: fgls,
        ols,
        t_stat,
        dof,
        p_value,
        accepted: p_value >= opts.level,
        level: opts.level,
        m: opts.m,
        r: spec.r,
        sigma_convention: opts.convention,
    })
}

/// Outcome of testing `K = 0, 1, …` in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub spectrum: WaveletSpectrum,
    /// One fit per order tried, in order.
    pub fits: Vec<FitResult>,
    /// The last fit was accepted; otherwise `K_max` was exhausted.
    pub accepted: bool,
}

impl Selection {
    /// The first accepted fit, or the `K_max` fit.
    pub fn chosen(&self) -> &FitResult {
        self.fits.last().expect("at least one order is tried")
    }
}

/// Tests `K = 0, 1, …, k_max` on a computed spectrum and stops at the first
/// accepted order.
pub fn select_k_from_spectrum(
    spec: WaveletSpectrum,
    w: &BandWavelet,
    opts: &FitOptions,
    k_max: usize,
    n: usize,
    delta: f64,
) -> Result<Selection> {
    let mut fits = Vec::new();
    for k in 0..=k_max {
        let fit = fit_order(&spec, w, k, opts, n, delta)?;
        let done = fit.accepted;
        fits.push(fit);
        if done {
            break;
        }
    }
    let accepted = fits.last().is_some_and(|f| f.accepted);
    Ok(Selection {
        spectrum: spec,
        fits,
        accepted,
    })
}

/// Full pipeline on a path: spectrum, then recursive order selection.
pub fn select_k(
    path: &SampledPath,
    w: &BandWavelet,
    grid: &FrequencyGrid,
    r: f64,
    opts: &FitOptions,
    k_max: usize,
) -> Result<Selection> {
    opts.validate()?;
    let spec = wavelet::spectrum(path, w, grid, r).map_err(|e| e.at_stage("spectrum", 0))?;
    select_k_from_spectrum(spec, w, opts, k_max, path.len(), path.delta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changepoint::build_grid;

    fn bump() -> BandWavelet {
        BandWavelet::bump(5.0, 10.0).unwrap()
    }

    fn grid() -> FrequencyGrid {
        build_grid(6000, 0.03, 0.05, 20.0, &bump()).unwrap().grid
    }

    /// Literal double integral by the trapezoid rule in both variables.
    fn sigma_entry_oracle(h: f64, gk: f64, gl: f64, w: &BandWavelet, r: f64) -> f64 {
        let Some((lo, hi)) = overlap(w, gk, gl) else {
            return 0.0;
        };
        let p = 2.0 * h + 1.0;
        let nx = 1500;
        let hx = (hi - lo) / nx as f64;
        let xs: Vec<f64> = (0..=nx).map(|i| lo + i as f64 * hx).collect();
        let fs: Vec<f64> = xs
            .iter()
            .map(|&x| w.psi_hat(x / gk) * w.psi_hat(x / gl) * x.powf(-p))
            .collect();
        // the inner transform is band-limited to [−hi, hi]
        let hu = std::f64::consts::PI / (2.0 * hi);
        let umax = 400.0 / (hi - lo);
        let nu = (umax / hu).ceil() as usize;
        let mut outer = 0.0;
        for j in 0..=nu {
            let u = j as f64 * hu;
            let inner: f64 = xs
                .iter()
                .zip(&fs)
                .map(|(&x, &f)| 2.0 * f * (u * x).cos())
                .sum::<f64>()
                * hx;
            let weight = if j == 0 { 1.0 } else { 2.0 };
            outer += weight * inner * inner * hu;
        }
        let k_h = w.k_const(h).unwrap();
        2.0 / (1.0 - 2.0 * r) * (gk * gl).powf(2.0 * h) * outer / (k_h * k_h)
    }

    #[test]
    fn sigma_matches_double_integral() {
        let w = bump();
        let cases = [
            (0.3, 1.0, 1.2),
            (0.7, 0.8, 0.95),
            (0.5, 2.0, 3.1),
            (0.15, 0.4, 0.55),
            (0.85, 1.3, 2.2),
        ];
        for &(h, g1, g2) in &cases {
            let s = sigma_matrix(h, &[g1, g2], &w, 0.1, SigmaConvention::Trimmed).unwrap();
            for (a, b, v) in [(g1, g1, s[0][0]), (g1, g2, s[0][1])] {
                let o = sigma_entry_oracle(h, a, b, &w, 0.1);
                assert!((v - o).abs() <= 1e-4 * o.abs().max(1e-300), "{h} {a} {b}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn sigma_zero_beyond_band_ratio() {
        let w = bump();
        let s = sigma_matrix(0.4, &[1.0, 2.0, 2.5], &w, 0.1, SigmaConvention::Trimmed).unwrap();
        assert_eq!(s[0][1], 0.0);
        assert_eq!(s[0][2], 0.0);
        assert!(s[1][2] > 0.0);
        assert!(s.iter().enumerate().all(|(i, row)| row[i] > 0.0));
    }

    #[test]
    fn sigma_scales_inversely_with_frequency() {
        let w = bump();
        let g = [0.7, 0.9, 1.2];
        let a = sigma_matrix(0.6, &g, &w, 0.1, SigmaConvention::Trimmed).unwrap();
        let g2: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
        let b = sigma_matrix(0.6, &g2, &w, 0.1, SigmaConvention::Trimmed).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((b[i][j] * 2.0 - a[i][j]).abs() <= 1e-9 * a[i][j].abs());
            }
        }
    }

    #[test]
    fn convention_prefactor_ratio() {
        let w = bump();
        let a = sigma_matrix(0.6, &[1.0], &w, 0.2, SigmaConvention::Trimmed).unwrap();
        let b = sigma_matrix(0.6, &[1.0], &w, 0.2, SigmaConvention::Plain).unwrap();
        assert!((a[0][0] / b[0][0] - 1.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn ols_inversion_identity() {
        let w = bump();
        let g = grid();
        let y: Vec<f64> = g.f.iter().map(|f| -2.2 * f.ln() + 1.5).collect();
        let e = ols_estimate(&y, &g, &[20, 40, 60, 80, 100], &w).unwrap();
        assert!((e.hurst - 0.6).abs() < 1e-12);
        assert!(!e.clamped);
        let expect = (1.5 - w.k_const(0.6).unwrap().ln()).exp();
        assert!((e.sigma2 - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn ols_clamps_hurst() {
        let w = bump();
        let g = grid();
        let y: Vec<f64> = g.f.iter().map(|f| -3.0 * f.ln()).collect();
        let e = ols_estimate(&y, &g, &[20, 40, 60], &w).unwrap();
        assert_eq!(e.hurst, HURST_CEIL);
        assert!(e.clamped);
        assert!(ols_estimate(&y, &g, &[20, 40], &w).is_err());
    }

    fn identity(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|i| (0..m).map(|j| f64::from(i == j)).collect()).collect()
    }

    #[test]
    fn gls_equals_ols_under_identity() {
        let w = bump();
        let g = grid();
        let y: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.7).sin() - 0.01 * i as f64).collect();
        let pts = [10, 30, 50, 70, 90];
        let o = ols_estimate(&y, &g, &pts, &w).unwrap();
        let f = fgls_estimate(&y, &g, &pts, &identity(5), &w).unwrap();
        assert!((o.slope - f.slope).abs() < 1e-12);
        assert!((o.intercept - f.intercept).abs() < 1e-12);
    }

    #[test]
    fn huge_variance_point_is_ignored() {
        let w = bump();
        let g = grid();
        let pts = [10, 30, 50, 70, 90];
        let mut y: Vec<f64> = g.f.iter().map(|f| -2.0 * f.ln()).collect();
        y[50] += 3.0;
        let mut s = identity(5);
        s[2][2] = 1e6;
        let f = fgls_estimate(&y, &g, &pts, &s, &w).unwrap();
        let rest = [10, 30, 70, 90];
        let o = ols_estimate(&y, &g, &rest, &w).unwrap();
        assert!((f.slope - o.slope).abs() < 1e-4);
        assert!((f.intercept - o.intercept).abs() < 1e-4);
    }

    #[test]
    fn exact_line_is_reproduced_by_any_sigma() {
        let w = bump();
        let g = grid();
        let pts = [10, 30, 50, 70, 90];
        let y: Vec<f64> = g.f.iter().map(|f| -1.8 * f.ln() + 0.4).collect();
        let mut s = identity(5);
        for i in 0..4 {
            s[i][i + 1] = 0.3;
            s[i + 1][i] = 0.3;
        }
        let f = fgls_estimate(&y, &g, &pts, &s, &w).unwrap();
        assert!((f.slope + 1.8).abs() < 1e-12);
        assert!((f.intercept - 0.4).abs() < 1e-12);
        let (t, dof) = test_statistic(&y, &g, &[f], 6000, 0.03).unwrap();
        assert!(t.abs() < 1e-18);
        assert_eq!(dof, 3);
    }

    #[test]
    fn scaling_sigma_leaves_gls_line() {
        let w = bump();
        let g = grid();
        let pts = [10, 30, 50, 70, 90];
        let y: Vec<f64> = (0..g.len()).map(|i| (i as f64).sqrt()).collect();
        let mut s = identity(5);
        s[0][1] = 0.2;
        s[1][0] = 0.2;
        let a = fgls_estimate(&y, &g, &pts, &s, &w).unwrap();
        let s7: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| 7.0 * v).collect()).collect();
        let b = fgls_estimate(&y, &g, &pts, &s7, &w).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        let (ta, _) = test_statistic(&y, &g, &[a], 100, 1.0).unwrap();
        let (tb, _) = test_statistic(&y, &g, &[b], 100, 1.0).unwrap();
        assert!((ta / tb - 7.0).abs() < 1e-9);
    }

    #[test]
    fn singular_sigma_is_ridged_or_rejected() {
        let w = bump();
        let g = grid();
        let pts = [10, 30, 50];
        let y: Vec<f64> = g.f.iter().map(|f| -2.0 * f.ln()).collect();
        let indefinite: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 2.0 }).collect())
            .collect();
        match fgls_estimate(&y, &g, &pts, &indefinite, &w) {
            Err(Error::IllConditioned { condition }) => assert!(condition > CONDITION_LIMIT),
            other => panic!("unexpected {other:?}"),
        }
        let f = fgls_estimate(&y, &g, &pts, &vec![vec![1.0; 3]; 3], &w).unwrap();
        assert!(f.ridge);
    }

    #[test]
    fn degrees_of_freedom() {
        let w = bump();
        let g = grid();
        let y: Vec<f64> = g.f.iter().map(|f| -2.0 * f.ln()).collect();
        let mk = |pts: &[usize]| fgls_estimate(&y, &g, pts, &identity(pts.len()), &w).unwrap();
        let one = mk(&[10, 20, 30, 40, 50]);
        let two = mk(&[110, 120, 130, 140, 150]);
        assert_eq!(test_statistic(&y, &g, &[one.clone()], 10, 1.0).unwrap().1, 3);
        assert_eq!(test_statistic(&y, &g, &[one, two], 10, 1.0).unwrap().1, 6);
    }

    #[test]
    fn zero_path_fails_at_spectrum_stage() {
        let w = bump();
        let p = SampledPath::new(0.03, vec![0.0; 6000]).unwrap();
        let err = select_k(&p, &w, &grid(), 0.1, &FitOptions::default(), 2).unwrap_err();
        match err {
            Error::Stage { stage, k, .. } => {
                assert_eq!(stage, "spectrum");
                assert_eq!(k, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn sigma_symmetric_with_disjoint_zeros(
                h in 0.06f64..0.94,
                g0 in 0.2f64..3.0,
                steps in proptest::collection::vec(1.05f64..1.9, 2..5),
            ) {
                let w = bump();
                let mut freqs = vec![g0];
                for s in &steps {
                    freqs.push(freqs.last().unwrap() * s);
                }
                let s = sigma_matrix(h, &freqs, &w, 0.1, SigmaConvention::Trimmed).unwrap();
                for k in 0..freqs.len() {
                    prop_assert!(s[k][k] > 0.0);
                    for l in 0..freqs.len() {
                        prop_assert_eq!(s[k][l], s[l][k]);
                        if freqs[k.max(l)] / freqs[k.min(l)] >= w.band_ratio() {
                            prop_assert_eq!(s[k][l], 0.0);
                        }
                    }
                }
            }

            #[test]
            fn gls_reproduces_exact_lines(h in 0.06f64..0.94, slope in -2.9f64..-1.1, c in -3.0f64..3.0) {
                let w = bump();
                let g = grid();
                let pts = [20, 35, 50, 65, 80];
                let y: Vec<f64> = g.f.iter().map(|f| slope * f.ln() + c).collect();
                let freqs: Vec<f64> = pts.iter().map(|&i| g.f[i]).collect();
                let s = sigma_matrix(h, &freqs, &w, 0.1, SigmaConvention::Trimmed).unwrap();
                let f = fgls_estimate(&y, &g, &pts, &s, &w).unwrap();
                prop_assert!((f.slope - slope).abs() < 1e-9);
                prop_assert!((f.intercept - c).abs() < 1e-9);
            }

            #[test]
            fn recover_inverts_the_line(h in 0.05f64..0.95, sigma2 in 0.01f64..100.0) {
                let w = bump();
                let intercept = sigma2.ln() + w.k_const(h).unwrap().ln();
                let (hh, clamped, s2) = recover(-(2.0 * h + 1.0), intercept, &w).unwrap();
                prop_assert!(!clamped);
                prop_assert!((hh - h).abs() < 1e-12);
                prop_assert!((s2 / sigma2 - 1.0).abs() < 1e-10);
            }
        }
    }
}
