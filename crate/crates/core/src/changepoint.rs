//! Frequency grid, piecewise-affine segmentation of the log-variance
//! spectrum, change-frequency estimates and refinement points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::BandWavelet;

/// Smallest number of regression points a segment may carry.
pub const MIN_SEGMENT_POINTS: usize = 3;

/// Geometric grid `f_k = (f_min/β)·q^k`, `k = 0..=a_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a_n: usize,
    pub q: f64,
    pub tau: usize,
    pub f: Vec<f64>,
}

impl FrequencyGrid {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Largest number of changes the grid can host.
    pub fn max_changes(&self) -> usize {
        // each segment spans at least τ + MIN_SEGMENT_POINTS indices
        (self.a_n + self.tau) / (self.tau + MIN_SEGMENT_POINTS) - 1
    }

    /// Change frequency `α·f_t` attached to a breakpoint index.
    pub fn omega_at(&self, t: usize) -> f64 {
        self.alpha * self.f[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBuild {
    pub grid: FrequencyGrid,
    pub warnings: Vec<String>,
}

/// Builds the analysis grid for `N` samples at step `delta` over the band
/// `[f_min, f_max]`.
pub fn build_grid(
    n: usize,
    delta: f64,
    f_min: f64,
    f_max: f64,
    w: &BandWavelet,
) -> Result<GridBuild> {
    if !(f_min.is_finite() && f_max.is_finite() && f_min > 0.0 && f_max > f_min) {
        return Err(Error::InvalidArgument(format!(
            "frequency band needs 0 < f_min < f_max, got [{f_min}, {f_max}]"
        )));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling step must be positive, got {delta}"
        )));
    }
    let (alpha, beta) = (w.alpha(), w.beta());
    let a_n = (n as f64 * delta).round();
    if a_n < 1.0 {
        return Err(Error::Domain(format!(
            "N·Δ = {} rounds to zero grid intervals",
            n as f64 * delta
        )));
    }
    let a_n = a_n as usize;
    let span = ((f_max / f_min) * (beta / alpha)).ln();
    let log_q = span / a_n as f64;
    let ratio = (beta / alpha).ln() / log_q;
    // guard against floor(2.9999999) when the ratio is an exact integer
    let tau = (ratio * (1.0 + 1e-12)).floor() as usize;
    if tau < 1 {
        return Err(Error::Domain(format!(
            "grid ratio q = {} exceeds β/α = {}; increase N·Δ or narrow [f_min, f_max]",
            log_q.exp(),
            beta / alpha
        )));
    }
    if a_n < 2 * (tau + 1) {
        return Err(Error::Domain(format!(
            "band too narrow: a_N = {a_n} < 2(τ_N + 1) = {}",
            2 * (tau + 1)
        )));
    }
    let f0 = f_min / beta;
    let f: Vec<f64> = (0..=a_n)
        .map(|k| f0 * (k as f64 / a_n as f64 * span).exp())
        .collect();
    let mut warnings = Vec::new();
    if n as f64 * f_min / beta < 10.0 {
        warnings.push(format!(
            "N·f_min/β = {:.3} is below 10; coarse scales have few coefficients",
            n as f64 * f_min / beta
        ));
    }
    if f_max / alpha > 1.0 / delta {
        warnings.push(format!(
            "f_max/α = {:.3} exceeds 1/Δ = {:.3}; finest scales are under-resolved",
            f_max / alpha,
            1.0 / delta
        ));
    }
    Ok(GridBuild {
        grid: FrequencyGrid {
            f_min,
            f_max,
            alpha,
            beta,
            a_n,
            q: log_q.exp(),
            tau,
            f,
        },
        warnings,
    })
}

/// Breakpoints `t_0 = 0 < t_1 < … < t_K < t_{K+1} = a_N + τ_N` with one
/// fitted `(slope, intercept)` line per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub t: Vec<usize>,
    pub lambda: Vec<(f64, f64)>,
    pub q: f64,
}

impl Segmentation {
    pub fn changes(&self) -> usize {
        self.t.len() - 2
    }

    /// Interior breakpoints `t_1..t_K`.
    pub fn breaks(&self) -> &[usize] {
        &self.t[1..self.t.len() - 1]
    }

    /// Regression indices `t_j + 1 ..= t_{j+1} − τ` of segment `j`.
    pub fn segment_range(&self, j: usize, tau: usize) -> std::ops::RangeInclusive<usize> {
        self.t[j] + 1..=self.t[j + 1] - tau
    }
}

/// Checks that `t` is admissible for `grid` and returns the number of
/// changes.
pub fn check_breakpoints(t: &[usize], grid: &FrequencyGrid) -> Result<usize> {
    if t.len() < 2 || t[0] != 0 || *t.last().unwrap() != grid.a_n + grid.tau {
        return Err(Error::InvalidArgument(format!(
            "breakpoints must start at 0 and end at a_N + τ_N = {}",
            grid.a_n + grid.tau
        )));
    }
    for (j, w) in t.windows(2).enumerate() {
        if w[1] <= w[0] + grid.tau {
            return Err(Error::InvalidArgument(format!(
                "segment {j} spans {}..{}, not more than τ_N = {}",
                w[0], w[1], grid.tau
            )));
        }
    }
    Ok(t.len() - 2)
}

/// `Q = Σ_j Σ_{i=t_j+1}^{t_{j+1}−τ} (Y_i − slope_j·log f_i − intercept_j)²`.
pub fn criterion_q(
    y: &[f64],
    grid: &FrequencyGrid,
    t: &[usize],
    lambda: &[(f64, f64)],
) -> Result<f64> {
    let k = check_breakpoints(t, grid)?;
    if lambda.len() != k + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} lines given for {} segments",
            lambda.len(),
            k + 1
        )));
    }
    check_len(y, grid)?;
    let mut q = 0.0;
    for j in 0..=k {
        let (slope, intercept) = lambda[j];
        for i in t[j] + 1..=t[j + 1] - grid.tau {
            let r = y[i] - slope * grid.f[i].ln() - intercept;
            q += r * r;
        }
    }
    Ok(q)
}

fn check_len(y: &[f64], grid: &FrequencyGrid) -> Result<()> {
    if y.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "spectrum has {} values but the grid has {} frequencies",
            y.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Prefix sums of `(1, x, x², y, xy, y²)` over centered data.
struct Moments {
    n: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    sy: Vec<f64>,
    sxy: Vec<f64>,
    syy: Vec<f64>,
}

impl Moments {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let len = x.len();
        let mx = x.iter().sum::<f64>() / len as f64;
        let my = y.iter().sum::<f64>() / len as f64;
        let mut m = Moments {
            n: vec![0.0; len + 1],
            sx: vec![0.0; len + 1],
            sxx: vec![0.0; len + 1],
            sy: vec![0.0; len + 1],
            sxy: vec![0.0; len + 1],
            syy: vec![0.0; len + 1],
        };
        for i in 0..len {
            let (u, v) = (x[i] - mx, y[i] - my);
            m.n[i + 1] = m.n[i] + 1.0;
            m.sx[i + 1] = m.sx[i] + u;
            m.sxx[i + 1] = m.sxx[i] + u * u;
            m.sy[i + 1] = m.sy[i] + v;
            m.sxy[i + 1] = m.sxy[i] + u * v;
            m.syy[i + 1] = m.syy[i] + v * v;
        }
        m
    }

    /// OLS residual sum of squares on indices `lo..=hi`.
    fn rss(&self, lo: usize, hi: usize) -> f64 {
        let d = |s: &Vec<f64>| s[hi + 1] - s[lo];
        let n = d(&self.n);
        let (sx, sy) = (d(&self.sx), d(&self.sy));
        let cxx = d(&self.sxx) - sx * sx / n;
        let cxy = d(&self.sxy) - sx * sy / n;
        let cyy = d(&self.syy) - sy * sy / n;
        (cyy - cxy * cxy / cxx).max(0.0)
    }
}

/// OLS line `(slope, intercept)` through `(x_i, y_i)`.
pub fn ols_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cxx = 0.0;
    let mut cxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cxx += (a - mx) * (a - mx);
        cxy += (a - mx) * (b - my);
    }
    if !(cxx > 0.0) {
        return Err(Error::Analysis(
            "regression design has zero variance in log f".into(),
        ));
    }
    let slope = cxy / cxx;
    Ok((slope, my - slope * mx))
}

/// Global minimizer of the criterion over segmentations with `k` changes.
///
/// Ties resolve to the lexicographically smallest breakpoint vector.
pub fn minimize_q(y: &[f64], grid: &FrequencyGrid, k: usize) -> Result<Segmentation> {
    check_len(y, grid)?;
    let tau = grid.tau;
    let end = grid.a_n + tau;
    let x: Vec<f64> = grid.f.iter().map(|f| f.ln()).collect();
    let mom = Moments::new(&x, y);
    let min_gap = tau + MIN_SEGMENT_POINTS;
    if (k + 1) * min_gap > end {
        return Err(Error::Infeasible(format!(
            "no segmentation with {k} changes leaves {MIN_SEGMENT_POINTS} points per segment (a_N = {}, τ_N = {tau})",
            grid.a_n
        )));
    }
    let cost = |s: usize, e: usize| mom.rss(s + 1, e - tau);

    // best[j][s]: optimal cost from breakpoint s (as t_j) to the end
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; end + 1]; k + 1];
    for s in 0..=end {
        if s + min_gap <= end {
            best[k][s] = cost(s, end);
        }
    }
    for j in (0..k).rev() {
        for s in 0..=end {
            let mut b = inf;
            for e in s + min_gap..=end {
                if best[j + 1][e].is_finite() {
                    b = b.min(cost(s, e) + best[j + 1][e]);
                }
            }
            best[j][s] = b;
        }
    }
    if !best[0][0].is_finite() {
        return Err(Error::Infeasible(format!(
            "no admissible segmentation with {k} changes"
        )));
    }

    let mut t = vec![0usize];
    let mut s = 0;
    for j in 0..k {
        let target = best[j][s];
        let tol = 1e-12 * target.abs().max(1e-300) + 1e-14;
        let next = (s + min_gap..=end)
            .find(|&e| best[j + 1][e].is_finite() && cost(s, e) + best[j + 1][e] <= target + tol)
            .expect("optimal continuation exists");
        t.push(next);
        s = next;
    }
    t.push(end);

    let mut lambda = Vec::with_capacity(k + 1);
    for w in t.windows(2) {
        let r = w[0] + 1..=w[1] - tau;
        lambda.push(ols_line(&x[r.clone()], &y[r])?);
    }
    let q = criterion_q(y, grid, &t, &lambda)?;
    Ok(Segmentation { t, lambda, q })
}

/// Change-frequency estimates `ω̂_j = α·f_{t̂_j}`, `j = 1..K`.
pub fn omega_hat(grid: &FrequencyGrid, seg: &Segmentation) -> Vec<f64> {
    seg.breaks().iter().map(|&t| grid.omega_at(t)).collect()
}

/// `m` equally spaced regression indices strictly inside each segment.
pub fn refine_points(t: &[usize], tau: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 refinement points per segment, got m = {m}"
        )));
    }
    let mut out = Vec::with_capacity(t.len() - 1);
    for (j, w) in t.windows(2).enumerate() {
        let usable = w[1] as i64 - w[0] as i64 - tau as i64;
        let step = if usable > 0 {
            usable as usize / (m + 1)
        } else {
            0
        };
        if step == 0 {
            return Err(Error::SegmentTooShort {
                segment: j,
                m,
                usable,
            });
        }
        out.push((1..=m).map(|k| w[0] + k * step).collect());
    }
    Ok(out)
}

/// Limits of the refinement-point frequencies for true change frequencies
/// `omegas`, as the grid is refined.
pub fn limit_points(
    omegas: &[f64],
    f_min: f64,
    f_max: f64,
    alpha: f64,
    beta: f64,
    m: usize,
) -> Vec<Vec<f64>> {
    let k = omegas.len();
    let mut out = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let lo = if j == 0 { f_min / beta } else { omegas[j - 1] / alpha };
        let hi = if j == k { f_max / alpha } else { omegas[j] / beta };
        out.push(
            (1..=m)
                .map(|i| lo * (hi / lo).powf(i as f64 / (m + 1) as f64))
                .collect(),
        );
    }
    out
}
