//! Replication harness: bias, MSE, coverage and interval length of the
//! posterior treatment-effect estimate over simulated datasets.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{treatment_effect, EstimandSummary};
use crate::extrapolation::ExtrapolationPriorSpec;
use crate::gibbs;
use crate::model::ModelConfig;
use crate::simulate::{self, ScenarioSpec};

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

const DATA_STREAM: u64 = u64::MAX - 1;
const CHAIN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub theta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RepResult {
    pub fn from_summary(rep: usize, s: &EstimandSummary) -> Self {
        RepResult {
            rep,
            theta_hat: s.mean,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub prior: String,
    pub scenario: String,
    pub theta_true: f64,
    pub n_reps: usize,
    pub n_failed: usize,
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub per_rep: Vec<RepResult>,
}

/// Aggregates per-replication results. Failed replications (`None`) are
/// excluded; more than 1% failures is an error.
pub fn aggregate(
    prior: &str,
    scenario: &str,
    theta_true: f64,
    results: Vec<Option<RepResult>>,
) -> Result<MetricsReport> {
    let n_reps = results.len();
    if n_reps == 0 {
        return Err(Error::Contract("need at least one replication".into()));
    }
    let per_rep: Vec<RepResult> = results.into_iter().flatten().collect();
    let n_failed = n_reps - per_rep.len();
    if n_failed as f64 > MAX_FAILURE_FRACTION * n_reps as f64 || per_rep.is_empty() {
        return Err(Error::Numeric(format!("{n_failed} of {n_reps} replications failed")));
    }
    let n = per_rep.len() as f64;
    let bias = per_rep.iter().map(|r| r.theta_hat - theta_true).sum::<f64>() / n;
    let mse = per_rep.iter().map(|r| (r.theta_hat - theta_true).powi(2)).sum::<f64>() / n;
    let covered = per_rep
        .iter()
        .filter(|r| r.ci_low <= theta_true && theta_true <= r.ci_high)
        .count();
    let mean_ci_length = per_rep.iter().map(|r| r.ci_high - r.ci_low).sum::<f64>() / n;
    Ok(MetricsReport {
        prior: prior.to_string(),
        scenario: scenario.to_string(),
        theta_true,
        n_reps,
        n_failed,
        bias,
        mse,
        coverage: covered as f64 / n,
        mean_ci_length,
        per_rep,
    })
}

/// Seed of replication `k` (1-based).
pub fn rep_seed(base_seed: u64, k: usize) -> u64 {
    base_seed.wrapping_add(k as u64)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates, fits and evaluates replication `k` under every prior.
pub fn run_replication(
    scenario: &ScenarioSpec,
    cfg: &ModelConfig,
    priors: &[ExtrapolationPriorSpec],
    k: usize,
    base_seed: u64,
) -> Result<Vec<RepResult>> {
    let seed = rep_seed(base_seed, k);
    let data = simulate::generate(scenario, &mut rng_for(seed, DATA_STREAM))?;
    let fit = gibbs::fit(data, cfg, &mut rng_for(seed, CHAIN_STREAM))?;
    priors
        .iter()
        .map(|p| {
            let (_, s) = treatment_effect(&fit.draws, &cfg.merge, p, cfg.mc_draws, seed)?;
            Ok(RepResult::from_summary(k, &s))
        })
        .collect()
}

/// Runs `n_reps` replications, fitting each dataset once and evaluating every
/// prior on the same posterior. Reports are in the order of `priors`.
pub fn replicate_study_priors(
    scenario: &ScenarioSpec,
    cfg: &ModelConfig,
    priors: &[ExtrapolationPriorSpec],
    n_reps: usize,
    base_seed: u64,
) -> Result<Vec<MetricsReport>> {
    if n_reps == 0 {
        return Err(Error::Contract("need at least one replication".into()));
    }
    if priors.is_empty() {
        return Err(Error::Contract("need at least one prior".into()));
    }
    cfg.validate()?;
    let theta_true = simulate::true_theta(scenario)?;
    let per_rep: Vec<Option<Vec<RepResult>>> = (1..=n_reps)
        .into_par_iter()
        .map(|k| match run_replication(scenario, cfg, priors, k, base_seed) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("replication {k} failed: {e}");
                None
            }
        })
        .collect();
    priors
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let column = per_rep.iter().map(|r| r.as_ref().map(|v| v[j])).collect();
            aggregate(&p.label(), scenario.id.as_str(), theta_true, column)
        })
        .collect()
}

pub fn replicate_study(
    scenario: &ScenarioSpec,
    cfg: &ModelConfig,
    prior: &ExtrapolationPriorSpec,
    n_reps: usize,
    base_seed: u64,
) -> Result<MetricsReport> {
    replicate_study_priors(scenario, cfg, std::slice::from_ref(prior), n_reps, base_seed).map(|mut v| v.remove(0))
}

/// One row of a sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub prior: String,
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub ci_length: f64,
}

/// Aligns reports that share a scenario and replication count.
pub fn compare_priors(reports: &[MetricsReport]) -> Result<Vec<TableRow>> {
    let Some(first) = reports.first() else {
        return Err(Error::Contract("no reports to compare".into()));
    };
    for r in reports {
        if r.scenario != first.scenario || r.n_reps != first.n_reps || r.theta_true != first.theta_true {
            return Err(Error::Contract(format!(
                "report for prior {} does not share scenario/replications with {}",
                r.prior, first.prior
            )));
        }
    }
    Ok(reports
        .iter()
        .map(|r| TableRow {
            prior: r.prior.clone(),
            bias: r.bias,
            mse: r.mse,
            coverage: r.coverage,
            ci_length: r.mean_ci_length,
        })
        .collect())
}

pub fn table_to_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

pub fn table_from_csv(text: &str) -> Result<Vec<TableRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Thread pool capped by `RAM_DPM_THREADS` (all cores when unset).
pub fn work_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RAM_DPM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("RAM_DPM_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(k: usize, t: f64, lo: f64, hi: f64) -> Option<RepResult> {
        Some(RepResult {
            rep: k,
            theta_hat: t,
            ci_low: lo,
            ci_high: hi,
        })
    }

    #[test]
    fn exact_estimator_has_no_error() {
        let r = aggregate("pm", "s2", 1.2, (0..10).map(|k| rep(k, 1.2, 1.2, 1.2)).collect()).unwrap();
        assert_eq!((r.bias, r.mse, r.coverage, r.mean_ci_length), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn alternating_estimator() {
        let theta = 0.5;
        let r = aggregate(
            "pm",
            "s2",
            theta,
            (0..10)
                .map(|k| {
                    let t = if k % 2 == 0 { theta + 1.0 } else { theta - 1.0 };
                    rep(k, t, t - 0.1, t + 0.1)
                })
                .collect(),
        )
        .unwrap();
        assert!(r.bias.abs() < 1e-12);
        assert!((r.mse - 1.0).abs() < 1e-12);
        assert_eq!(r.coverage, 0.0);
        assert!(r.bias * r.bias <= r.mse + 1e-12);
    }

    #[test]
    fn failures_are_excluded_up_to_one_percent() {
        let mut v: Vec<_> = (0..200).map(|k| rep(k, 1.0, 0.0, 2.0)).collect();
        v[3] = None;
        v[77] = None;
        let r = aggregate("none", "s2", 1.0, v.clone()).unwrap();
        assert_eq!((r.n_reps, r.n_failed, r.per_rep.len()), (200, 2, 198));
        v[100] = None;
        assert!(matches!(aggregate("none", "s2", 1.0, v), Err(Error::Numeric(_))));
    }

    #[test]
    fn prior_table_round_trip() {
        let mk = |p: &str, b: f64| aggregate(p, "s2", 1.0, vec![rep(1, 1.0 + b, 0.5, 1.75)]).unwrap();
        let reports = vec![mk("none", 0.1), mk("pm", -0.2)];
        let rows = compare_priors(&reports).unwrap();
        assert_eq!(rows.len(), 2);
        let back = table_from_csv(&table_to_csv(&rows).unwrap()).unwrap();
        assert_eq!(rows, back);
        let single = compare_priors(&reports[..1]).unwrap();
        assert_eq!(single.len(), 1);
        let same = compare_priors(&[reports[0].clone(), reports[0].clone()]).unwrap();
        assert_eq!(same[0], same[1]);
        let mut other = reports[1].clone();
        other.scenario = "s6".into();
        assert!(compare_priors(&[reports[0].clone(), other]).is_err());
    }
}
