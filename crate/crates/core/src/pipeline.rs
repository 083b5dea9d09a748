//! The five CLI commands as library functions. Each reads its inputs from
//! the run configuration and writes its artifacts into an output directory.

use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data;
use crate::error::{Error, Result};
use crate::estimands::{gof_table, treatment_effect, EstimandSummary, GofCell};
use crate::gibbs;
use crate::metrics::{self, MetricsReport, TableRow};
use crate::model::{normalize_attempts, Dataset, PosteriorDraw};
use crate::simulate::{self, SimulationSidecar};

pub const DATA_FILE: &str = "data.csv";
pub const SIDECAR_FILE: &str = "sidecar.json";
pub const DRAWS_FILE: &str = "draws.json";
pub const ESTIMATE_FILE: &str = "estimate.json";
pub const GOF_FILE: &str = "gof.json";
pub const GOF_CSV_FILE: &str = "gof.csv";
pub const BENCH_FILE: &str = "bench.json";
pub const BENCH_CSV_FILE: &str = "bench.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Estimate,
    Gof,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub prior_kind: String,
    #[serde(rename = "P")]
    pub p: f64,
    pub theta_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_length: f64,
    pub n_draws: usize,
    pub gof: Vec<GofCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub theta_true: f64,
    pub n_reps: usize,
    pub base_seed: u64,
    pub table: Vec<TableRow>,
    pub reports: Vec<MetricsReport>,
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("this command needs \"{key}\" in the config")))
}

fn observed_data(cfg: &RunConfig) -> Result<Option<Dataset>> {
    cfg.data
        .as_deref()
        .map(|p| data::read_dataset(p, cfg.model.k).map(normalize_attempts))
        .transpose()
}

fn load_draws(cfg: &RunConfig) -> Result<Vec<PosteriorDraw>> {
    let draws = data::read_draws(require(&cfg.draws, "draws")?)?;
    for d in &draws {
        d.validate(&cfg.model)?;
    }
    Ok(draws)
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<SimulationSidecar> {
    let seed = cfg.model.seed;
    let ds = simulate::generate(&cfg.scenario, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let sidecar = SimulationSidecar {
        theta_true: simulate::true_theta(&cfg.scenario)?,
        seed,
        spec: cfg.scenario.clone(),
    };
    data::write_dataset(&out.join(DATA_FILE), &ds)?;
    data::write_json(&out.join(SIDECAR_FILE), &sidecar)?;
    Ok(sidecar)
}

pub fn fit_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PosteriorDraw>> {
    let ds = data::read_dataset(require(&cfg.data, "data")?, cfg.model.k)?;
    info!("fitting {} records, {} iterations", ds.len(), cfg.model.n_iter);
    let fit = gibbs::fit(ds, &cfg.model, &mut ChaCha8Rng::seed_from_u64(cfg.model.seed))?;
    data::write_draws(&out.join(DRAWS_FILE), &fit.draws)?;
    Ok(fit.draws)
}

pub fn gof_cells(cfg: &RunConfig, draws: &[PosteriorDraw]) -> Result<Vec<GofCell>> {
    let observed = observed_data(cfg)?;
    gof_table(
        draws,
        &cfg.model.merge,
        cfg.model.mc_draws,
        cfg.model.seed,
        observed.as_ref(),
    )
}

pub fn estimate_from_draws(cfg: &RunConfig, draws: &[PosteriorDraw]) -> Result<(Vec<f64>, EstimandSummary)> {
    treatment_effect(
        draws,
        &cfg.model.merge,
        &cfg.extrapolation,
        cfg.model.mc_draws,
        cfg.model.seed,
    )
}

pub fn estimate_cmd(cfg: &RunConfig, out: &Path) -> Result<EstimateReport> {
    let draws = load_draws(cfg)?;
    let (_, s) = estimate_from_draws(cfg, &draws)?;
    let report = EstimateReport {
        prior_kind: cfg.extrapolation.kind.to_string(),
        p: cfg.extrapolation.p,
        theta_mean: s.mean,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
        ci_length: s.ci_length,
        n_draws: s.n_draws,
        gof: gof_cells(cfg, &draws)?,
    };
    data::write_json(&out.join(ESTIMATE_FILE), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct GofCsvRow {
    z: u8,
    r_star: usize,
    mean: f64,
    ci_low: f64,
    ci_high: f64,
    observed_mean: Option<f64>,
    n_observed: usize,
}

pub fn gof_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<GofCell>> {
    let draws = load_draws(cfg)?;
    let cells = gof_cells(cfg, &draws)?;
    data::write_json(&out.join(GOF_FILE), &cells)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &cells {
        w.serialize(GofCsvRow {
            z: c.z,
            r_star: c.r_star,
            mean: c.summary.mean,
            ci_low: c.summary.ci_low,
            ci_high: c.summary.ci_high,
            observed_mean: c.observed_mean,
            n_observed: c.n_observed,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    data::write_text(&out.join(GOF_CSV_FILE), &String::from_utf8_lossy(&bytes))?;
    Ok(cells)
}

pub fn bench_cmd(cfg: &RunConfig, out: &Path) -> Result<BenchReport> {
    let b = &cfg.bench;
    let reports = metrics::replicate_study_priors(&cfg.scenario, &cfg.model, &b.priors, b.n_reps, b.base_seed)?;
    let table = metrics::compare_priors(&reports)?;
    let report = BenchReport {
        scenario: cfg.scenario.id.as_str().to_string(),
        theta_true: reports[0].theta_true,
        n_reps: b.n_reps,
        base_seed: b.base_seed,
        table: table.clone(),
        reports,
    };
    data::write_json(&out.join(BENCH_FILE), &report)?;
    data::write_text(&out.join(BENCH_CSV_FILE), &metrics::table_to_csv(&table)?)?;
    Ok(report)
}

/// Runs one command inside a work pool sized by `RAM_DPM_THREADS`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = metrics::work_pool()?;
    pool.install(|| match command {
        Command::Simulate => simulate_cmd(cfg, out).map(|_| ()),
        Command::Fit => fit_cmd(cfg, out).map(|_| ()),
        Command::Estimate => estimate_cmd(cfg, out).map(|_| ()),
        Command::Gof => gof_cmd(cfg, out).map(|_| ()),
        Command::Bench => bench_cmd(cfg, out).map(|_| ()),
    })
}

/// Process exit status for an error: 1 for usage and input problems, 2 for
/// numeric or statistical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 1,
        _ => 2,
    }
}
