//! Exact Gaussian synthesis of sample paths by Cholesky factorization of
//! the model covariance on the sampling grid.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, SampledPath, Variogram};
use crate::rng::NormalStream;

/// Default cap on the number of samples (an `N × N` factor is stored).
pub const DEFAULT_MAX_SAMPLES: usize = 8192;

/// Relative diagonal jitter levels tried in order, as multiples of `tr/n`.
const JITTER_LEVELS: [f64; 3] = [0.0, 1e-12, 1e-10];

/// Matrices up to this size get a semidefinite fallback factorization.
const SEMIDEFINITE_FALLBACK_MAX: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    /// ChaCha stream; replication harnesses use one stream per replication.
    pub stream: u64,
    pub max_samples: usize,
}

impl SimConfig {
    pub fn new(model: ModelSpec, n: usize, delta: f64, seed: u64) -> Self {
        Self {
            model,
            n,
            delta,
            seed,
            stream: 0,
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got N = {}",
                self.n
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling step must be positive, got {}",
                self.delta
            )));
        }
        if self.n > self.max_samples {
            return Err(Error::Resource(format!(
                "N = {} exceeds the factorization cap of {} samples",
                self.n, self.max_samples
            )));
        }
        Ok(())
    }
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ C`.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    lower: Mat<f64>,
    jitter: f64,
}

impl CovarianceFactor {
    /// Factors a symmetric matrix, escalating diagonal jitter when needed.
    pub fn new(cov: &Mat<f64>) -> Result<Self> {
        let n = cov.nrows();
        if cov.ncols() != n {
            return Err(Error::InvalidArgument("covariance must be square".into()));
        }
        let trace: f64 = (0..n).map(|i| cov[(i, i)]).sum();
        if n == 0 || trace == 0.0 {
            if (0..n).all(|i| (0..n).all(|j| cov[(i, j)] == 0.0)) {
                return Ok(Self {
                    lower: Mat::zeros(n, n),
                    jitter: 0.0,
                });
            }
        }
        let unit = trace / n as f64;
        for &level in &JITTER_LEVELS {
            let jitter = level * unit;
            let attempt = if jitter == 0.0 {
                cov.llt(Side::Lower)
            } else {
                let mut shifted = cov.clone();
                for i in 0..n {
                    shifted[(i, i)] += jitter;
                }
                shifted.llt(Side::Lower)
            };
            if let Ok(llt) = attempt {
                return Ok(Self {
                    lower: llt.L().to_owned(),
                    jitter,
                });
            }
            if level == 0.0 && n <= SEMIDEFINITE_FALLBACK_MAX {
                if let Some(lower) = semidefinite_cholesky(cov, 1e-10 * unit) {
                    return Ok(Self { lower, jitter: 0.0 });
                }
            }
        }
        let smallest = cov
            .self_adjoint_eigenvalues(Side::Lower)
            .ok()
            .and_then(|ev| ev.first().copied())
            .unwrap_or(f64::NAN);
        Err(Error::Simulation(format!(
            "covariance is not positive semidefinite within jitter budget (smallest eigenvalue ≈ {smallest:.3e})"
        )))
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Diagonal jitter that was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L z` for a given standard normal vector.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        // fixed summation order keeps draws bit-identical across thread counts
        let n = z.len();
        let mut x = vec![0.0; n];
        for (j, &zj) in z.iter().enumerate() {
            let col = self.lower.col(j).try_as_col_major().unwrap().as_slice();
            for i in j..n {
                x[i] += col[i] * zj;
            }
        }
        x
    }

    /// One draw with normals from the `(seed, stream)` generator.
    pub fn sample(&self, seed: u64, stream: u64) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        NormalStream::new(seed, stream).fill(&mut z);
        self.apply(&z)
    }
}

/// Cholesky that drops pivots in `[-tol, tol]`, for rank-deficient
/// positive semidefinite inputs.
fn semidefinite_cholesky(cov: &Mat<f64>, tol: f64) -> Option<Mat<f64>> {
    let n = cov.nrows();
    let mut l = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            // column stays zero; remaining entries must be consistent
            for i in j + 1..n {
                let mut s = cov[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > (tol * cov[(i, i)].abs()).sqrt() + tol {
                    return None;
                }
            }
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    Some(l)
}

/// Draws one centered Gaussian vector with covariance `cov`.
pub fn gaussian_vector(cov: &Mat<f64>, seed: u64) -> Result<Vec<f64>> {
    Ok(CovarianceFactor::new(cov)?.sample(seed, 0))
}

/// Covariance matrix of `(X(Δ), …, X(nΔ))`.
pub fn path_covariance(model: &ModelSpec, n: usize, delta: f64) -> Result<Mat<f64>> {
    let vario = Variogram::new(model)?;
    let lags = (0..=n)
        .map(|k| vario.at(k as f64 * delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_fn(n, n, |i, j| {
        let (s, t) = (i + 1, j + 1);
        0.5 * (lags[s] + lags[t] - lags[s.abs_diff(t)])
    }))
}

/// Factored path covariance, reusable across replications of one model.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    model: ModelSpec,
    delta: f64,
    factor: CovarianceFactor,
}

impl PathSimulator {
    pub fn new(model: &ModelSpec, n: usize, delta: f64, max_samples: usize) -> Result<Self> {
        let cfg = SimConfig {
            max_samples,
            ..SimConfig::new(model.clone(), n, delta, 0)
        };
        cfg.validate()?;
        let cov = path_covariance(model, n, delta)?;
        let factor = CovarianceFactor::new(&cov)?;
        Ok(Self {
            model: model.clone(),
            delta,
            factor,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample(&self, seed: u64, stream: u64) -> SampledPath {
        SampledPath::new(self.delta, self.factor.sample(seed, stream))
            .expect("factor output is finite with N >= 2")
    }
}

/// Simulates one path for `cfg`.
pub fn simulate_path(cfg: &SimConfig) -> Result<SampledPath> {
    cfg.validate()?;
    Ok(PathSimulator::new(&cfg.model, cfg.n, cfg.delta, cfg.max_samples)?
        .sample(cfg.seed, cfg.stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_by_seed() {
        let m = ModelSpec::fbm(0.7, 1.0).unwrap();
        let cfg = SimConfig::new(m, 64, 0.1, 42);
        let a = simulate_path(&cfg).unwrap();
        let b = simulate_path(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_errors() {
        let m = ModelSpec::fbm(0.7, 1.0).unwrap();
        assert!(matches!(
            simulate_path(&SimConfig::new(m.clone(), 1, 0.1, 0)),
            Err(Error::InvalidArgument(_))
        ));
        let big = SimConfig {
            max_samples: 100,
            ..SimConfig::new(m, 101, 0.1, 0)
        };
        assert!(matches!(simulate_path(&big), Err(Error::Resource(_))));
    }

    #[test]
    fn zero_covariance_gives_zero_vector() {
        let cov = Mat::<f64>::zeros(4, 4);
        assert_eq!(gaussian_vector(&cov, 1).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn rank_one_gives_equal_coordinates() {
        let cov = Mat::from_fn(2, 2, |_, _| 1.0);
        for seed in 0..20 {
            let x = gaussian_vector(&cov, seed).unwrap();
            assert_eq!(x[0], x[1]);
        }
    }

    #[test]
    fn identity_draws_are_standard() {
        let f = CovarianceFactor::new(&Mat::<f64>::identity(3, 3)).unwrap();
        let draws: Vec<Vec<f64>> = (0..10_000).map(|s| f.sample(5, s)).collect();
        for i in 0..3 {
            let xs: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 0.05);
            assert!((var - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn draws_reproduce_the_variogram() {
        let m = ModelSpec::from_sigma2(vec![2.0], vec![0.3, 0.8], vec![1.0, 0.5]).unwrap();
        let sim = PathSimulator::new(&m, 100, 0.1, 8192).unwrap();
        let draws: Vec<SampledPath> = (0..3000).map(|s| sim.sample(8, s)).collect();
        for (lag, from) in [(1usize, 40usize), (10, 0), (60, 30)] {
            let incr: Vec<f64> = draws
                .iter()
                .map(|p| {
                    let x = p.values();
                    let start = if from == 0 { 0.0 } else { x[from - 1] };
                    x[from + lag - 1] - start
                })
                .collect();
            let ms = incr.iter().map(|v| v * v).sum::<f64>() / incr.len() as f64;
            let v = crate::model::variogram(&m, lag as f64 * 0.1).unwrap();
            // relative sd of the mean square is sqrt(2/3000) ≈ 2.6%
            assert!((ms / v - 1.0).abs() < 0.12, "lag {lag}: {ms} vs {v}");
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let cov = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        match CovarianceFactor::new(&cov) {
            Err(Error::Simulation(msg)) => assert!(msg.contains("-1.000e0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
