//! Run configuration: defaults, flat `key = value` files and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FitOptions, SigmaConvention};
use crate::model::ModelSpec;
use crate::simulate::DEFAULT_MAX_SAMPLES;
use crate::wavelet::{BandWavelet, WaveletKind};

/// Every knob of the command-line pipelines. The serialized form is echoed
/// into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hurst: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub omega: Vec<f64>,
    /// FBM Hurst exponents swept by `montecarlo`; empty runs the model above.
    pub sweep_hurst: Vec<f64>,
    pub wavelet: WaveletKind,
    pub alpha: f64,
    pub beta: f64,
    pub wavelet_table: Option<PathBuf>,
    pub f_min: f64,
    pub f_max: f64,
    pub r: f64,
    pub m: usize,
    pub level: f64,
    pub k_max: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub reps: usize,
    pub workers: usize,
    pub max_samples: usize,
    pub sigma_convention: SigmaConvention,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hurst: vec![0.5],
            sigma2: vec![1.0],
            omega: vec![],
            sweep_hurst: vec![],
            wavelet: WaveletKind::Bump,
            alpha: 5.0,
            beta: 10.0,
            wavelet_table: None,
            f_min: 0.05,
            f_max: 20.0,
            r: 0.1,
            m: 5,
            level: 0.05,
            k_max: 2,
            n: 6000,
            delta: 0.03,
            seed: 1,
            reps: 30,
            workers: 0,
            max_samples: DEFAULT_MAX_SAMPLES,
            sigma_convention: SigmaConvention::Trimmed,
        }
    }
}

/// Keys accepted in configuration files and by `--set`.
pub const KEYS: &[&str] = &[
    "hurst",
    "sigma2",
    "omega",
    "sweep_hurst",
    "wavelet",
    "alpha",
    "beta",
    "wavelet_table",
    "f_min",
    "f_max",
    "r",
    "m",
    "level",
    "k_max",
    "n",
    "delta",
    "seed",
    "reps",
    "workers",
    "max_samples",
    "sigma_convention",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "hurst" => self.hurst = parse_list(&key, value)?,
            "sigma2" => self.sigma2 = parse_list(&key, value)?,
            "omega" => self.omega = parse_list(&key, value)?,
            "sweep_hurst" => self.sweep_hurst = parse_list(&key, value)?,
            "wavelet" => {
                self.wavelet = match value.trim() {
                    "bump" => WaveletKind::Bump,
                    "meyer-shifted" | "meyer" => WaveletKind::MeyerShifted,
                    "custom-table" | "custom" => WaveletKind::CustomTable,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown wavelet `{other}` (expected bump, meyer-shifted or custom-table)"
                        )))
                    }
                }
            }
            "alpha" => self.alpha = parse(&key, value)?,
            "beta" => self.beta = parse(&key, value)?,
            "wavelet_table" => {
                let v = value.trim();
                self.wavelet_table = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "f_min" => self.f_min = parse(&key, value)?,
            "f_max" => self.f_max = parse(&key, value)?,
            "r" => self.r = parse(&key, value)?,
            "m" => self.m = parse(&key, value)?,
            "level" => self.level = parse(&key, value)?,
            "k_max" => self.k_max = parse(&key, value)?,
            "n" => self.n = parse(&key, value)?,
            "delta" => self.delta = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "reps" => self.reps = parse(&key, value)?,
            "workers" => self.workers = parse(&key, value)?,
            "max_samples" => self.max_samples = parse(&key, value)?,
            "sigma_convention" => self.sigma_convention = value.trim().parse()?,
            other => {
                return Err(Error::Config(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected `key = value`", i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Flat text that reproduces this configuration through [`apply_text`].
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn to_flat(&self) -> String {
        let wavelet = match self.wavelet {
            WaveletKind::Bump => "bump",
            WaveletKind::MeyerShifted => "meyer-shifted",
            WaveletKind::CustomTable => "custom-table",
        };
        let table = self
            .wavelet_table
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let rows = [
            ("hurst", list(&self.hurst)),
            ("sigma2", list(&self.sigma2)),
            ("omega", list(&self.omega)),
            ("sweep_hurst", list(&self.sweep_hurst)),
            ("wavelet", wavelet.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("wavelet_table", table),
            ("f_min", self.f_min.to_string()),
            ("f_max", self.f_max.to_string()),
            ("r", self.r.to_string()),
            ("m", self.m.to_string()),
            ("level", self.level.to_string()),
            ("k_max", self.k_max.to_string()),
            ("n", self.n.to_string()),
            ("delta", self.delta.to_string()),
            ("seed", self.seed.to_string()),
            ("reps", self.reps.to_string()),
            ("workers", self.workers.to_string()),
            ("max_samples", self.max_samples.to_string()),
            ("sigma_convention", self.sigma_convention.name().to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn model(&self) -> Result<ModelSpec> {
        ModelSpec::from_sigma2(self.omega.clone(), self.hurst.clone(), self.sigma2.clone())
            .map_err(|e| Error::Config(format!("model: {e}")))
    }

    pub fn wavelet(&self) -> Result<BandWavelet> {
        let w = match self.wavelet {
            WaveletKind::Bump => BandWavelet::bump(self.alpha, self.beta),
            WaveletKind::MeyerShifted => Ok(BandWavelet::meyer_shifted()),
            WaveletKind::CustomTable => {
                let path = self.wavelet_table.as_ref().ok_or_else(|| {
                    Error::Config("custom-table wavelet needs `wavelet_table`".into())
                })?;
                BandWavelet::custom_from_file(self.alpha, self.beta, path)
            }
        };
        w.map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Config(format!("wavelet: {msg}")),
            other => other,
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            m: self.m,
            level: self.level,
            convention: self.sigma_convention,
        }
    }

    /// Checks the analysis settings shared by every pipeline.
    pub fn validate_analysis(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.r > 0.0 && self.r < 1.0 / 3.0) {
            return bad(format!("r must lie in (0, 1/3), got {}", self.r));
        }
        if self.m < 3 {
            return bad(format!("m must be at least 3, got {}", self.m));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if !(self.f_min > 0.0 && self.f_max > self.f_min) {
            return bad(format!(
                "need 0 < f_min < f_max, got f_min = {}, f_max = {}",
                self.f_min, self.f_max
            ));
        }
        Ok(())
    }

    /// Checks the sampling settings used when simulating.
    pub fn validate_sampling(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}
