//! Bluestein chirp-z evaluation of `y_k = Σ_n x_n exp(iθ n k)` for an
//! arbitrary real frequency step θ.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// `exp(2πi · turns · sq)` with the product reduced modulo one turn
/// before rounding, so large `sq` does not lose phase accuracy.
struct QuadraticPhase {
    hi: f64,
    lo: f64,
}

impl QuadraticPhase {
    fn new(turns: f64, max_sq: f64) -> Self {
        let magnitude = (turns.abs() * max_sq).max(1.0);
        let bits = (52.0 - magnitude.log2().ceil()).clamp(0.0, 52.0);
        let scale = bits.exp2();
        let hi = (turns * scale).round() / scale;
        Self {
            hi,
            lo: turns - hi,
        }
    }

    fn at(&self, sq: u64) -> Complex64 {
        let s = sq as f64;
        // hi * s is exact by construction of `hi`
        let coarse = self.hi * s;
        let frac = (coarse - coarse.floor()) + self.lo * s;
        Complex64::from_polar(1.0, TAU * frac)
    }
}

/// Returns `y_k = Σ_{n=0}^{len-1} x_n exp(iθ n k)` for `k = 0..count`.
pub fn chirp_sum(x: &[Complex64], theta: f64, count: usize) -> Vec<Complex64> {
    let m = x.len();
    if m == 0 || count == 0 {
        return vec![Complex64::new(0.0, 0.0); count];
    }
    let len = (m + count - 1).next_power_of_two();
    let max_idx = m.max(count) as f64;
    // nk = (n² + k² − (k − n)²) / 2, phases in turns of θ/(4π)
    let phase = QuadraticPhase::new(theta / (2.0 * TAU), max_idx * max_idx);

    let mut a = vec![Complex64::new(0.0, 0.0); len];
    for (n, (slot, &xn)) in a.iter_mut().zip(x).enumerate() {
        *slot = xn * phase.at((n * n) as u64);
    }
    let mut b = vec![Complex64::new(0.0, 0.0); len];
    for d in 0..count {
        b[d] = phase.at((d * d) as u64).conj();
    }
    for d in 1..m {
        b[len - d] = phase.at((d * d) as u64).conj();
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    let norm = 1.0 / len as f64;
    (0..count)
        .map(|k| a[k] * norm * phase.at((k * k) as u64))
        .collect()
}
