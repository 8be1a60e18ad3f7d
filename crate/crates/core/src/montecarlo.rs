//! Replication harness: simulate, analyze and test many paths per model and
//! summarize the estimates and the null distribution of `T_K`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{build_grid, FrequencyGrid};
use crate::error::{Error, Result};
use crate::inference::{fit_order, FitOptions, FitResult};
use crate::model::ModelSpec;
use crate::rng::stream_index;
use crate::simulate::PathSimulator;
use crate::stats::{chi2_cdf, ks_statistic, mean, std_dev, KsResult};
use crate::wavelet::{spectrum, BandWavelet};

/// One model to replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub model: ModelSpec,
    pub f_min: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub cells: Vec<Cell>,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub delta: f64,
    pub r: f64,
    pub fit: FitOptions,
    /// Orders `0..=k_max` are fitted on every replication.
    pub k_max: usize,
    pub max_samples: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

/// Per-replication summary of one fitted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderOutcome {
    pub k: usize,
    pub hurst: Vec<f64>,
    pub hurst_ols: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub omegas: Vec<f64>,
    pub t_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub accepted: bool,
}

impl From<&FitResult> for OrderOutcome {
    fn from(f: &FitResult) -> Self {
        Self {
            k: f.k,
            hurst: f.segments.iter().map(|s| s.hurst).collect(),
            hurst_ols: f.ols.iter().map(|s| s.hurst).collect(),
            sigma2: f.segments.iter().map(|s| s.sigma2).collect(),
            omegas: f.omegas.clone(),
            t_stat: f.t_stat,
            dof: f.dof,
            p_value: f.p_value,
            accepted: f.accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    /// Indexed by order; `None` when that order failed.
    pub orders: Vec<Option<OrderOutcome>>,
    /// First accepted order, if any.
    pub selected: Option<usize>,
    pub errors: Vec<String>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: if xs.is_empty() { f64::NAN } else { mean(xs) },
            sd: std_dev(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub k: usize,
    pub successes: usize,
    /// FGLS `Ĥ_j` per segment.
    pub hurst: Vec<Moments>,
    pub hurst_ols: Vec<Moments>,
    pub omegas: Vec<Moments>,
    pub dof: usize,
    pub t_stats: Vec<f64>,
    pub acceptance_rate: f64,
    /// KS test of the pooled `T_K` against `χ²(dof)`; absent with < 5 values.
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub grid: FrequencyGrid,
    pub grid_warnings: Vec<String>,
    pub reps: usize,
    pub orders: Vec<OrderSummary>,
    /// `selected[k]` counts replications whose first accepted order is `k`.
    pub selected: Vec<usize>,
    /// Replications with no accepted order up to `k_max`.
    pub exhausted: usize,
    pub failures: usize,
    pub failure_tally: BTreeMap<String, usize>,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub cells: Vec<CellReport>,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Config(format!(
                "need at least 2 replications, got {}",
                self.reps
            )));
        }
        if self.cells.is_empty() {
            return Err(Error::Config("no Monte Carlo cells configured".into()));
        }
        if self.cells.len() > u32::MAX as usize || self.reps > u32::MAX as usize {
            return Err(Error::Config("too many cells or replications".into()));
        }
        self.fit.validate()
    }
}

/// Runs every cell. Replication `i` of cell `c` draws its normals from
/// stream `(c << 32) | i` of `seed`.
pub fn run(cfg: &McConfig, w: &BandWavelet) -> Result<McReport> {
    cfg.validate()?;
    let body = || -> Result<McReport> {
        let mut cells = Vec::with_capacity(cfg.cells.len());
        for (ci, cell) in cfg.cells.iter().enumerate() {
            cells.push(run_cell(cfg, w, ci, cell)?);
        }
        Ok(McReport { cells })
    };
    if cfg.workers == 0 {
        body()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(body)
    }
}

fn run_cell(cfg: &McConfig, w: &BandWavelet, ci: usize, cell: &Cell) -> Result<CellReport> {
    let built = build_grid(cfg.n, cfg.delta, cell.f_min, cell.f_max, w)?;
    let grid = built.grid;
    cell.model.check_separation(w.band_ratio())?;
    let sim = PathSimulator::new(&cell.model, cfg.n, cfg.delta, cfg.max_samples)?;
    log::info!("cell {}: {} replications", cell.label, cfg.reps);
    let replications: Vec<Replication> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let path = sim.sample(cfg.seed, stream_index(ci as u32, rep as u32));
            let mut out = Replication {
                rep,
                orders: vec![None; cfg.k_max + 1],
                selected: None,
                errors: Vec::new(),
            };
            let spec = match spectrum(&path, w, &grid, cfg.r) {
                Ok(s) => s,
                Err(e) => {
                    out.errors.push(e.at_stage("spectrum", 0).to_string());
                    return out;
                }
            };
            for k in 0..=cfg.k_max {
                match fit_order(&spec, w, k, &cfg.fit, cfg.n, cfg.delta) {
                    Ok(fit) => {
                        if fit.accepted && out.selected.is_none() {
                            out.selected = Some(k);
                        }
                        out.orders[k] = Some(OrderOutcome::from(&fit));
                    }
                    Err(e) => out.errors.push(e.to_string()),
                }
            }
            out
        })
        .collect();
    Ok(summarize(cfg, cell.clone(), grid, built.warnings, replications))
}

fn summarize(
    cfg: &McConfig,
    cell: Cell,
    grid: FrequencyGrid,
    grid_warnings: Vec<String>,
    replications: Vec<Replication>,
) -> CellReport {
    let mut orders = Vec::with_capacity(cfg.k_max + 1);
    for k in 0..=cfg.k_max {
        let ok: Vec<&OrderOutcome> = replications
            .iter()
            .filter_map(|r| r.orders[k].as_ref())
            .collect();
        let column = |f: &dyn Fn(&OrderOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<_>>();
        let hurst = (0..=k).map(|j| Moments::of(&column(&|o| o.hurst[j]))).collect();
        let hurst_ols = (0..=k).map(|j| Moments::of(&column(&|o| o.hurst_ols[j]))).collect();
        let omegas = (0..k).map(|j| Moments::of(&column(&|o| o.omegas[j]))).collect();
        let t_stats = column(&|o| o.t_stat);
        let dof = (k + 1) * (cfg.fit.m - 2);
        let ks = ks_statistic(&t_stats, |x| chi2_cdf(x, dof)).ok();
        let accepted = ok.iter().filter(|o| o.accepted).count();
        orders.push(OrderSummary {
            k,
            successes: ok.len(),
            hurst,
            hurst_ols,
            omegas,
            dof,
            acceptance_rate: if ok.is_empty() {
                f64::NAN
            } else {
                accepted as f64 / ok.len() as f64
            },
            t_stats,
            ks,
        });
    }
    let mut selected = vec![0; cfg.k_max + 1];
    let mut exhausted = 0;
    let mut failures = 0;
    let mut failure_tally = BTreeMap::new();
    for r in &replications {
        match r.selected {
            Some(k) => selected[k] += 1,
            None => exhausted += 1,
        }
        if !r.errors.is_empty() {
            failures += 1;
        }
        for e in &r.errors {
            *failure_tally.entry(e.clone()).or_insert(0) += 1;
        }
    }
    CellReport {
        cell,
        grid,
        grid_warnings,
        reps: cfg.reps,
        orders,
        selected,
        exhausted,
        failures,
        failure_tally,
        replications,
    }
}

/// Pools the `T_K` values of order `k` across cells and tests them against
/// `χ²((k+1)(m−2))`.
pub fn pooled_ks(report: &McReport, k: usize, m: usize) -> Result<(Vec<f64>, KsResult)> {
    let t: Vec<f64> = report
        .cells
        .iter()
        .filter_map(|c| c.orders.get(k))
        .flat_map(|o| o.t_stats.iter().copied())
        .collect();
    let dof = (k + 1) * (m - 2);
    let ks = ks_statistic(&t, |x| chi2_cdf(x, dof))?;
    Ok((t, ks))
}

/// Raw per-replication statistics as CSV rows.
pub fn raw_csv(report: &McReport) -> String {
    let mut s = String::from("cell,rep,k,t_stat,dof,p_value,accepted,hurst,hurst_ols,omegas\n");
    for c in &report.cells {
        for r in &c.replications {
            for o in r.orders.iter().flatten() {
                let join = |v: &[f64]| {
                    v.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(";")
                };
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    c.cell.label,
                    r.rep,
                    o.k,
                    o.t_stat,
                    o.dof,
                    o.p_value,
                    o.accepted,
                    join(&o.hurst),
                    join(&o.hurst_ols),
                    join(&o.omegas)
                ));
            }
        }
    }
    s
}
