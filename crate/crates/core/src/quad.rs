//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_100_850,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const MAX_INTERVALS: usize = 2000;

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the summed error bound falls below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    let first = gk21(&f, a, b);
    let mut intervals = vec![(a, b, first)];
    let mut total = first;
    loop {
        if !total.value.is_finite() {
            return Err(Error::Numeric {
                what: "quadrature (non-finite integrand)".into(),
                achieved: f64::INFINITY,
            });
        }
        let target = abs_tol.max(rel_tol * total.value.abs());
        if total.error <= target {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Numeric {
                what: "adaptive quadrature".into(),
                achieved: total.error / total.value.abs().max(f64::MIN_POSITIVE),
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, est) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval cannot be split further in floating point
            return Err(Error::Numeric {
                what: "adaptive quadrature (interval exhausted)".into(),
                achieved: total.error / total.value.abs().max(f64::MIN_POSITIVE),
            });
        }
        let left = gk21(&f, lo, mid);
        let right = gk21(&f, mid, hi);
        total.value += left.value + right.value - est.value;
        total.error += left.error + right.error - est.error;
        intervals.push((lo, mid, left));
        intervals.push((mid, hi, right));
        // refresh the running sums now and then to shed accumulated rounding
        if intervals.len() % 64 == 0 {
            total = intervals.iter().fold(
                Estimate {
                    value: 0.0,
                    error: 0.0,
                },
                |acc, (_, _, e)| Estimate {
                    value: acc.value + e.value,
                    error: acc.error + e.error,
                },
            );
        }
    }
}

/// Integrates over a list of consecutive breakpoints, summing the pieces.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    let mut acc = Estimate {
        value: 0.0,
        error: 0.0,
    };
    for w in breaks.windows(2) {
        let e = integrate(&f, w[0], w[1], rel_tol, abs_tol)?;
        acc.value += e.value;
        acc.error += e.error;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        // K21 integrates degree 31 exactly; check a degree 20 polynomial.
        let e = integrate(|x| x.powi(20), -1.0, 1.0, 1e-14, 0.0).unwrap();
        assert!((e.value - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_weights_sum_to_two() {
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        let k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((g - 2.0).abs() < 1e-14);
        assert!((k - 2.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        let e = integrate(|x: f64| x.powf(-0.7), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((e.value - 1.0 / 0.3).abs() < 1e-8);
    }

    #[test]
    fn oscillatory() {
        let e = integrate(|x: f64| (40.0 * x).cos(), 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((e.value - (120.0f64).sin() / 40.0).abs() < 1e-12);
    }

    #[test]
    fn reports_failure_on_nonintegrable() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 0.0);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }
}
