//! Command-line front end.
//!
//! Exit codes: 0 success or accepted model, 2 configuration or input error,
//! 3 no order up to `k_max` accepted, 4 numeric failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::changepoint::{build_grid, FrequencyGrid};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::inference::{select_k_from_spectrum, FitResult, Selection};
use crate::io;
use crate::model::{ModelSpec, SampledPath};
use crate::montecarlo::{self, Cell, CellReport, McConfig};
use crate::simulate::PathSimulator;
use crate::stats::KsResult;
use crate::wavelet::{spectrum, BandWavelet, WaveletSpectrum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "msfbm",
    version,
    about = "Simulate multiscale fractional Brownian motion and identify its frequency changes"
)]
pub struct Cli {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Sets any configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    #[command(flatten)]
    pub flags: Flags,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// Typed overrides for the configuration keys. Lists are comma separated;
/// frequencies are raw Fourier variables.
#[derive(Debug, Args)]
pub struct Flags {
    /// Hurst exponents, one per regime.
    #[arg(long, global = true)]
    pub hurst: Option<String>,
    /// Squared scale parameters, one per regime.
    #[arg(long, global = true)]
    pub sigma2: Option<String>,
    /// Change frequencies.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub omega: Option<String>,
    /// FBM Hurst exponents swept by `montecarlo`.
    #[arg(long, global = true)]
    pub sweep_hurst: Option<String>,
    /// bump, meyer-shifted or custom-table.
    #[arg(long, global = true)]
    pub wavelet: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    #[arg(long, global = true)]
    pub beta: Option<String>,
    /// Two-column (ξ, ψ̂(ξ)) file for the custom-table wavelet.
    #[arg(long, global = true)]
    pub wavelet_table: Option<String>,
    #[arg(long, global = true)]
    pub f_min: Option<String>,
    #[arg(long, global = true)]
    pub f_max: Option<String>,
    /// Trimming fraction of shifts, in (0, 1/3).
    #[arg(long, global = true)]
    pub r: Option<String>,
    /// Refinement points per segment.
    #[arg(long, global = true)]
    pub m: Option<String>,
    /// Test level.
    #[arg(long, global = true)]
    pub level: Option<String>,
    #[arg(long, global = true)]
    pub k_max: Option<String>,
    /// Number of samples.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Sampling step.
    #[arg(long, global = true)]
    pub delta: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Monte Carlo replications per cell.
    #[arg(long, global = true)]
    pub reps: Option<String>,
    /// Worker threads for Monte Carlo (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<String>,
    /// Cap on N for the Cholesky factorization.
    #[arg(long, global = true)]
    pub max_samples: Option<String>,
    /// trimmed (2/(1−2r)) or plain (2).
    #[arg(long, global = true)]
    pub sigma_convention: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let all = [
            ("hurst", &self.hurst),
            ("sigma2", &self.sigma2),
            ("omega", &self.omega),
            ("sweep_hurst", &self.sweep_hurst),
            ("wavelet", &self.wavelet),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("wavelet_table", &self.wavelet_table),
            ("f_min", &self.f_min),
            ("f_max", &self.f_max),
            ("r", &self.r),
            ("m", &self.m),
            ("level", &self.level),
            ("k_max", &self.k_max),
            ("n", &self.n),
            ("delta", &self.delta),
            ("seed", &self.seed),
            ("reps", &self.reps),
            ("workers", &self.workers),
            ("max_samples", &self.max_samples),
            ("sigma_convention", &self.sigma_convention),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write it as `time,value` CSV plus a JSON sidecar.
    Simulate {
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Compute the log-variance spectrum and regression overlay of a path.
    Analyze {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Select the number of changes and estimate every regime.
    Fit {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        /// Report path; printed to stdout when absent.
        #[arg(long, value_name = "JSON")]
        out: Option<PathBuf>,
    },
    /// Replicate simulation and fitting; write a table and raw statistics.
    Montecarlo {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

/// Effective configuration: defaults, then the file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in cli.flags.pairs() {
        cfg.set(k, v)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Numeric { .. } | Error::IllConditioned { .. } | Error::Simulation(_) | Error::Analysis(_) => {
            EXIT_NUMERIC
        }
        _ => EXIT_CONFIG,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Simulate { out } => cmd_simulate(&cfg, out),
        Command::Analyze { input, out_dir } => cmd_analyze(&cfg, input, out_dir),
        Command::Fit { input, out } => cmd_fit(&cfg, input, out.as_deref()),
        Command::Montecarlo { out_dir } => cmd_montecarlo(&cfg, out_dir),
    }
}

#[derive(Debug, Serialize)]
struct SimulationMeta<'a> {
    model: &'a ModelSpec,
    n: usize,
    delta: f64,
    seed: u64,
    jitter: f64,
    config: &'a RunConfig,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<i32> {
    cfg.validate_sampling()?;
    let model = cfg.model()?;
    let sim = PathSimulator::new(&model, cfg.n, cfg.delta, cfg.max_samples)?;
    let path = sim.sample(cfg.seed, 0);
    io::write_text(out, &io::path_csv(&path))?;
    io::write_json(
        &out.with_extension("json"),
        &SimulationMeta {
            model: &model,
            n: cfg.n,
            delta: cfg.delta,
            seed: cfg.seed,
            jitter: sim.jitter(),
            config: cfg,
        },
    )?;
    Ok(EXIT_OK)
}

struct Prepared {
    path: SampledPath,
    wavelet: BandWavelet,
    grid: FrequencyGrid,
    warnings: Vec<String>,
}

fn prepare(cfg: &RunConfig, input: &Path) -> Result<Prepared> {
    cfg.validate_analysis()?;
    let wavelet = cfg.wavelet()?;
    let path = io::read_path(input, Some(cfg.delta))?;
    if path.is_degenerate() {
        return Err(Error::DegeneratePath(format!(
            "{}: all samples are equal",
            input.display()
        )));
    }
    let built = build_grid(path.len(), path.delta(), cfg.f_min, cfg.f_max, &wavelet)
        .map_err(|e| Error::Config(format!("frequency grid: {e}")))?;
    for w in &built.warnings {
        log::warn!("{w}");
    }
    Ok(Prepared {
        path,
        wavelet,
        grid: built.grid,
        warnings: built.warnings,
    })
}

fn spectrum_csv(spec: &WaveletSpectrum) -> String {
    let mut s = String::from("f,log_f,y,count\n");
    for ((f, y), c) in spec.grid.f.iter().zip(&spec.y).zip(&spec.counts) {
        s.push_str(&format!("{},{},{},{}\n", f, f.ln(), y, c));
    }
    s
}

/// Fitted FGLS lines over each segment's regression range plus the
/// refinement points themselves.
fn overlay_csv(spec: &WaveletSpectrum, fit: &FitResult) -> String {
    let grid = &spec.grid;
    let mut s = String::from("segment,kind,log_f,y\n");
    for (j, seg) in fit.segments.iter().enumerate() {
        for i in fit.segmentation.segment_range(j, grid.tau) {
            let x = grid.f[i].ln();
            s.push_str(&format!("{j},line,{x},{}\n", seg.slope * x + seg.intercept));
        }
        for &i in &seg.points {
            s.push_str(&format!("{j},point,{},{}\n", grid.f[i].ln(), spec.y[i]));
        }
    }
    s
}

#[derive(Debug, Serialize)]
struct TestedOrder {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "T_stat")]
    t_stat: f64,
    dof: usize,
    p_value: f64,
    accepted: bool,
}

#[derive(Debug, Serialize)]
struct GridSummary {
    a_n: usize,
    tau: usize,
    q: f64,
    f_min: f64,
    f_max: f64,
    f_first: f64,
    f_last: f64,
}

impl From<&FrequencyGrid> for GridSummary {
    fn from(g: &FrequencyGrid) -> Self {
        Self {
            a_n: g.a_n,
            tau: g.tau,
            q: g.q,
            f_min: g.f_min,
            f_max: g.f_max,
            f_first: g.f[0],
            f_last: g.f[g.a_n],
        }
    }
}

#[derive(Debug, Serialize)]
struct FitReport<'a> {
    input: String,
    n: usize,
    delta: f64,
    grid: GridSummary,
    warnings: &'a [String],
    #[serde(flatten)]
    fit: &'a FitResult,
    k_max_exhausted: bool,
    tested: Vec<TestedOrder>,
    config: &'a RunConfig,
}

fn fit_report<'a>(
    input: &Path,
    prep: &'a Prepared,
    sel: &'a Selection,
    cfg: &'a RunConfig,
) -> FitReport<'a> {
    FitReport {
        input: input.display().to_string(),
        n: prep.path.len(),
        delta: prep.path.delta(),
        grid: GridSummary::from(&prep.grid),
        warnings: &prep.warnings,
        fit: sel.chosen(),
        k_max_exhausted: !sel.accepted,
        tested: sel
            .fits
            .iter()
            .map(|f| TestedOrder {
                k: f.k,
                t_stat: f.t_stat,
                dof: f.dof,
                p_value: f.p_value,
                accepted: f.accepted,
            })
            .collect(),
        config: cfg,
    }
}

fn analyze_selection(cfg: &RunConfig, prep: &Prepared) -> Result<Selection> {
    let spec = spectrum(&prep.path, &prep.wavelet, &prep.grid, cfg.r)
        .map_err(|e| e.at_stage("spectrum", 0))?;
    select_k_from_spectrum(
        spec,
        &prep.wavelet,
        &cfg.fit_options(),
        cfg.k_max,
        prep.path.len(),
        prep.path.delta(),
    )
}

pub fn cmd_analyze(cfg: &RunConfig, input: &Path, out_dir: &Path) -> Result<i32> {
    let prep = prepare(cfg, input)?;
    let spec = spectrum(&prep.path, &prep.wavelet, &prep.grid, cfg.r)
        .map_err(|e| e.at_stage("spectrum", 0))?;
    io::write_text(&out_dir.join("spectrum.csv"), &spectrum_csv(&spec))?;
    match select_k_from_spectrum(
        spec.clone(),
        &prep.wavelet,
        &cfg.fit_options(),
        cfg.k_max,
        prep.path.len(),
        prep.path.delta(),
    ) {
        Ok(sel) => {
            io::write_text(&out_dir.join("overlay.csv"), &overlay_csv(&spec, sel.chosen()))?;
            io::write_json(&out_dir.join("fit.json"), &fit_report(input, &prep, &sel, cfg))?;
        }
        Err(e) => log::warn!("spectrum written but fitting failed: {e}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_fit(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<i32> {
    let prep = prepare(cfg, input)?;
    let sel = analyze_selection(cfg, &prep)?;
    let report = fit_report(input, &prep, &sel, cfg);
    match out {
        Some(p) => io::write_json(p, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    }
    Ok(if sel.accepted { EXIT_OK } else { EXIT_EXHAUSTED })
}

#[derive(Debug, Serialize)]
struct PooledKs {
    #[serde(rename = "K")]
    k: usize,
    dof: usize,
    ks: KsResult,
}

#[derive(Debug, Serialize)]
struct MonteCarloReport<'a> {
    cells: &'a [CellReport],
    pooled: Vec<PooledKs>,
    config: &'a RunConfig,
}

/// Cells implied by the configuration: an FBM sweep or the single model.
pub fn mc_cells(cfg: &RunConfig) -> Result<Vec<Cell>> {
    if cfg.sweep_hurst.is_empty() {
        let model = cfg.model()?;
        return Ok(vec![Cell {
            label: "model".into(),
            model,
            f_min: cfg.f_min,
            f_max: cfg.f_max,
        }]);
    }
    let sigma2 = cfg.sigma2.first().copied().unwrap_or(1.0);
    cfg.sweep_hurst
        .iter()
        .map(|&h| {
            Ok(Cell {
                label: format!("H={h}"),
                model: ModelSpec::from_sigma2(vec![], vec![h], vec![sigma2])
                    .map_err(|e| Error::Config(format!("sweep_hurst: {e}")))?,
                f_min: cfg.f_min,
                f_max: cfg.f_max,
            })
        })
        .collect()
}

pub fn cmd_montecarlo(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    cfg.validate_sampling()?;
    cfg.validate_analysis()?;
    let w = cfg.wavelet()?;
    let mc = McConfig {
        cells: mc_cells(cfg)?,
        reps: cfg.reps,
        seed: cfg.seed,
        n: cfg.n,
        delta: cfg.delta,
        r: cfg.r,
        fit: cfg.fit_options(),
        k_max: cfg.k_max,
        max_samples: cfg.max_samples,
        workers: cfg.workers,
    };
    let report = montecarlo::run(&mc, &w)?;
    let pooled = (0..=cfg.k_max)
        .filter_map(|k| {
            montecarlo::pooled_ks(&report, k, cfg.m)
                .ok()
                .map(|(_, ks)| PooledKs {
                    k,
                    dof: (k + 1) * (cfg.m - 2),
                    ks,
                })
        })
        .collect();
    io::write_text(&out_dir.join("raw.csv"), &montecarlo::raw_csv(&report))?;
    io::write_json(
        &out_dir.join("table.json"),
        &MonteCarloReport {
            cells: &report.cells,
            pooled,
            config: cfg,
        },
    )?;
    Ok(EXIT_OK)
}
