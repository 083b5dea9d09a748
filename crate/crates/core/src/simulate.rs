//! Data generators for the simulation scenarios and the analytic truth of
//! their treatment effects.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, expit, sample_categorical, std_normal};
use crate::model::{AttemptRecord, Dataset, MergeMap};

/// Maximum number of attempts in every scenario.
pub const K: usize = 9;
/// Mean and variance of the continuous covariate.
pub const X_MEAN: f64 = 2.0;
pub const X_VAR: f64 = 0.2;
/// Shape of the skew-normal error law.
pub const SKEW_SHAPE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    S2,
    S3,
    S5,
    S6,
    S1Custom,
    S4Custom,
}

impl ScenarioId {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S5 => "s5",
            ScenarioId::S6 => "s6",
            ScenarioId::S1Custom => "s1_custom",
            ScenarioId::S4Custom => "s4_custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    T3,
    SkewNormal,
}

impl ErrorLaw {
    /// Standardized error draw (location 0, scale 1; the skew-normal is not
    /// mean-corrected).
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal => std_normal(rng),
            ErrorLaw::T3 => {
                let z = std_normal(rng);
                let chi2: f64 = (0..3).map(|_| std_normal(rng).powi(2)).sum();
                z / (chi2 / 3.0).sqrt()
            }
            ErrorLaw::SkewNormal => {
                let d = skew_delta();
                d * std_normal(rng).abs() + (1.0 - d * d).sqrt() * std_normal(rng)
            }
        }
    }

    /// E[ε] for the standardized error.
    pub fn mean(self) -> f64 {
        match self {
            ErrorLaw::Normal | ErrorLaw::T3 => 0.0,
            ErrorLaw::SkewNormal => skew_delta() * (2.0 / std::f64::consts::PI).sqrt(),
        }
    }
}

fn skew_delta() -> f64 {
    SKEW_SHAPE / (1.0 + SKEW_SHAPE * SKEW_SHAPE).sqrt()
}

/// Coefficients for the two scenarios whose published values were fitted to
/// data that is not available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CustomCoefficients {
    /// Pattern-mixture intercepts `alpha[z][r* - 1]` for r* = 1..=4 under the
    /// merged map, plus a common slope on x.
    PatternMixture { alpha: [[f64; 4]; 2], beta: f64 },
    /// Outcome-first selection model with a discrete-time attempt hazard.
    Selection(SelectionCoefficients),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCoefficients {
    pub beta0: f64,
    /// Treatment effect on the outcome.
    pub xi: f64,
    pub beta_x: f64,
    /// Outcome standard deviation.
    pub sigma: f64,
    /// Per-attempt hazard intercepts, treatment and covariate effects for
    /// attempts 1..=8.
    pub lambda0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda_x: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

/// Number of attempts modeled by the hazard; later attempts are non-response.
pub const HAZARD_ATTEMPTS: usize = 8;

impl SelectionCoefficients {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", &self.lambda0),
            ("gamma", &self.gamma),
            ("lambda_x", &self.lambda_x),
        ] {
            if v.len() != HAZARD_ATTEMPTS {
                return Err(Error::Config(format!(
                    "{name} needs {HAZARD_ATTEMPTS} entries, got {}",
                    v.len()
                )));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("selection-model sigma must be positive".into()));
        }
        Ok(())
    }

    /// Hazard of responding at attempt `r` given the outcome.
    pub fn hazard(&self, r: usize, z: u8, x: f64, y: f64) -> f64 {
        let zf = f64::from(z);
        expit(
            self.lambda0[r - 1]
                + self.gamma[r - 1] * zf
                + self.lambda_x[r - 1] * x
                + self.delta1 * y
                + self.delta2 * y * zf,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub error: ErrorLaw,
    pub sigma: f64,
    /// Attempt distribution over 1..=K+1 for control and treatment.
    pub attempt_probs: [Vec<f64>; 2],
    pub missing_frac_override: Option<f64>,
    pub custom_coefficients: Option<CustomCoefficients>,
}

impl ScenarioSpec {
    /// Defaults: normal errors, σ = 2, per-arm attempt probabilities.
    pub fn new(id: ScenarioId, n: usize) -> Self {
        let (c, t) = quatro_attempt_probs();
        ScenarioSpec {
            id,
            n,
            error: ErrorLaw::Normal,
            sigma: 2.0,
            attempt_probs: [c, t],
            missing_frac_override: None,
            custom_coefficients: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (z, p) in self.attempt_probs.iter().enumerate() {
            if p.len() != K + 1 || p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "attempt_probs[{z}] is not a simplex over 1..={}",
                    K + 1
                )));
            }
        }
        if let Some(t) = self.missing_frac_override {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("missing fraction must lie in (0, 1), got {t}")));
            }
        }
        match (self.id, &self.custom_coefficients) {
            (ScenarioId::S1Custom, Some(CustomCoefficients::PatternMixture { .. })) => Ok(()),
            (ScenarioId::S4Custom, Some(CustomCoefficients::Selection(c))) => c.validate(),
            (ScenarioId::S1Custom | ScenarioId::S4Custom, _) => Err(Error::Config(format!(
                "scenario {} needs its custom coefficient table",
                self.id.as_str()
            ))),
            _ => Ok(()),
        }
    }

    /// Attempt probabilities after applying the missing-fraction override.
    pub fn effective_attempt_probs(&self) -> Result<[Vec<f64>; 2]> {
        match self.missing_frac_override {
            None => Ok(self.attempt_probs.clone()),
            Some(t) => Ok([
                rescale_missingness(&self.attempt_probs[0], t)?,
                rescale_missingness(&self.attempt_probs[1], t)?,
            ]),
        }
    }
}

/// Per-arm attempt distributions from the trial's attempt counts; the sparse
/// attempts 4..=9 share their total count equally.
pub fn quatro_attempt_probs() -> (Vec<f64>, Vec<f64>) {
    (
        probs_from_counts(&[77.0, 94.0, 7.0], 7.0 + 3.0 + 2.0 + 1.0 + 1.0, 13.0),
        probs_from_counts(&[73.0, 90.0, 7.0], 1.0 + 3.0 + 1.0, 29.0),
    )
}

/// Both arms' counts pooled into one attempt distribution.
pub fn quatro_pooled_attempt_probs() -> Vec<f64> {
    probs_from_counts(&[150.0, 184.0, 14.0], 14.0 + 5.0, 42.0)
}

fn probs_from_counts(first: &[f64; 3], middle: f64, missing: f64) -> Vec<f64> {
    let total = first.iter().sum::<f64>() + middle + missing;
    let mut p: Vec<f64> = first.iter().map(|c| c / total).collect();
    p.extend(std::iter::repeat_n(middle / (6.0 * total), 6));
    p.push(missing / total);
    p
}

pub fn merge_attempts(r: usize, merge: &MergeMap) -> Result<usize> {
    merge.apply(r)
}

/// Sets p(K+1) to `target` and rescales the completed patterns.
pub fn rescale_missingness(probs: &[f64], target: f64) -> Result<Vec<f64>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!(
            "target missing fraction {target} outside (0, 1)"
        )));
    }
    let Some((&old, head)) = probs.split_last() else {
        return Err(Error::Contract("empty attempt distribution".into()));
    };
    if old >= 1.0 {
        return Err(Error::Degenerate("every subject is missing; cannot rescale".into()));
    }
    let f = (1.0 - target) / (1.0 - old);
    let mut out: Vec<f64> = head.iter().map(|p| p * f).collect();
    out.push(target);
    Ok(out)
}

/// Linear functional form h*(z, r).
pub fn h_star(z: u8, r: usize) -> f64 {
    let r = r as f64;
    if z == 1 {
        27.24 - 1.91 * r
    } else {
        25.58 - 1.65 * r
    }
}

/// Nonlinear functional form h(z, r).
pub fn h_nonlinear(z: u8, r: usize) -> f64 {
    let r = r as f64;
    if z == 1 {
        30.0 * (-0.13 * r).exp()
    } else {
        29.0 * (-0.15 * r).exp()
    }
}

/// Mixture weight of the first component in the two-component scenario.
pub fn s5_weight(z: u8, r: usize) -> f64 {
    expit(2.0 * f64::from(z) - 0.2 * r as f64 - 1.0)
}

pub fn s5_g(z: u8, r: usize) -> f64 {
    let r = r as f64;
    if z == 1 {
        60.24 - 1.91 * r
    } else {
        60.58 - 1.65 * r
    }
}

pub const S5_BETA: [f64; 2] = [0.4, 1.0];
/// Slope on x in every other scenario.
pub const BETA_X: f64 = 0.4;

/// Latent class probabilities given the attempt count.
pub fn s6_class_probs(r: usize) -> [f64; 4] {
    let p = match r {
        1 => [0.8, 0.1, 0.1, 0.0],
        2 => [0.1, 0.8, 0.1, 0.0],
        r if r <= K => [0.1, 0.1, 0.8, 0.0],
        _ => [0.0, 0.0, 0.0, 1.0],
    };
    debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    p
}

/// Merged level used by the scenario-2 and custom pattern-mixture truths.
fn merged_level(r: usize) -> usize {
    if r <= K {
        r.min(3)
    } else {
        4
    }
}

/// Conditional mean of Y given (z, r, x), before the error law; for s5 this
/// averages the two components. Not defined for the selection scenario.
fn conditional_mean(spec: &ScenarioSpec, z: u8, r: usize, x: f64) -> Result<f64> {
    Ok(match spec.id {
        ScenarioId::S2 => h_star(z, merged_level(r)) + BETA_X * x,
        ScenarioId::S3 => h_nonlinear(z, r) + BETA_X * x,
        ScenarioId::S5 => {
            let w = s5_weight(z, r);
            w * (s5_g(z, r) + S5_BETA[0] * x) + (1.0 - w) * (h_nonlinear(z, r) + S5_BETA[1] * x)
        }
        ScenarioId::S6 => {
            let pc = s6_class_probs(r);
            (1..=4).map(|c| pc[c - 1] * h_star(z, c)).sum::<f64>() + BETA_X * x
        }
        ScenarioId::S1Custom => match &spec.custom_coefficients {
            Some(CustomCoefficients::PatternMixture { alpha, beta }) => {
                alpha[usize::from(z)][merged_level(r) - 1] + beta * x
            }
            _ => return Err(Error::Config("s1_custom needs pattern-mixture coefficients".into())),
        },
        ScenarioId::S4Custom => return Err(Error::Contract("selection scenario has no pattern conditional".into())),
    })
}

/// Outcome given (z, r, x) for the pattern-mixture scenarios.
fn draw_outcome<R: Rng + ?Sized>(spec: &ScenarioSpec, z: u8, r: usize, x: f64, rng: &mut R) -> Result<f64> {
    let loc = match spec.id {
        ScenarioId::S5 => {
            if rng.random::<f64>() < s5_weight(z, r) {
                s5_g(z, r) + S5_BETA[0] * x
            } else {
                h_nonlinear(z, r) + S5_BETA[1] * x
            }
        }
        ScenarioId::S6 => {
            let c = 1 + sample_categorical(&s6_class_probs(r), rng);
            h_star(z, c) + BETA_X * x
        }
        _ => conditional_mean(spec, z, r, x)?,
    };
    Ok(loc + spec.sigma * spec.error.sample(rng))
}

fn draw_x<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    math::normal(X_MEAN, X_VAR, rng)
}

/// Attempt count and outcome under the selection model.
fn draw_selection<R: Rng + ?Sized>(
    c: &SelectionCoefficients,
    z: u8,
    x: f64,
    err: ErrorLaw,
    rng: &mut R,
) -> (usize, f64) {
    let y = c.beta0 + c.xi * f64::from(z) + c.beta_x * x + c.sigma * err.sample(rng);
    for r in 1..=HAZARD_ATTEMPTS {
        if rng.random::<f64>() < c.hazard(r, z, x, y) {
            return (r, y);
        }
    }
    (K + 1, y)
}

/// Generates one dataset. The outcome is missing exactly when r = K + 1.
pub fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let probs = spec.effective_attempt_probs()?;
    let mut records = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z = u8::from(rng.random::<f64>() < 0.5);
        let x = draw_x(rng);
        let (r, y) = match (&spec.id, &spec.custom_coefficients) {
            (ScenarioId::S4Custom, Some(CustomCoefficients::Selection(c))) => draw_selection(c, z, x, spec.error, rng),
            _ => {
                let r = 1 + sample_categorical(&probs[usize::from(z)], rng);
                (r, draw_outcome(spec, z, r, x, rng)?)
            }
        };
        records.push(AttemptRecord {
            y: (r <= K).then_some(y),
            r,
            x_cat: 1,
            x_cont: Some(x),
            z,
        });
    }
    Dataset::new(records, K, 1)
}

pub fn gen_scenario2<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    expect_id(spec, ScenarioId::S2)?;
    generate(spec, rng)
}

pub fn gen_scenario3<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    expect_id(spec, ScenarioId::S3)?;
    generate(spec, rng)
}

pub fn gen_scenario5<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    expect_id(spec, ScenarioId::S5)?;
    generate(spec, rng)
}

pub fn gen_scenario6<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    expect_id(spec, ScenarioId::S6)?;
    generate(spec, rng)
}

pub fn gen_scenario4_custom<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    expect_id(spec, ScenarioId::S4Custom)?;
    generate(spec, rng)
}

fn expect_id(spec: &ScenarioSpec, id: ScenarioId) -> Result<()> {
    if spec.id != id {
        return Err(Error::Contract(format!(
            "expected scenario {}, got {}",
            id.as_str(),
            spec.id.as_str()
        )));
    }
    Ok(())
}

/// θ = E(Y | Z = 1) − E(Y | Z = 0) under the generating law, by exact
/// summation over the attempt patterns with E[x] = 2.
pub fn true_theta(spec: &ScenarioSpec) -> Result<f64> {
    spec.validate()?;
    if let (ScenarioId::S4Custom, Some(CustomCoefficients::Selection(c))) = (&spec.id, &spec.custom_coefficients) {
        return Ok(c.xi);
    }
    let probs = spec.effective_attempt_probs()?;
    let mut e = [0.0; 2];
    for z in 0..2u8 {
        for r in 1..=K + 1 {
            // Linear in x, so E over x is evaluation at E[x].
            e[usize::from(z)] += probs[usize::from(z)][r - 1] * conditional_mean(spec, z, r, X_MEAN)?;
        }
    }
    Ok(e[1] - e[0])
}

/// Monte-Carlo average of complete-data potential outcome differences: each
/// subject gets one covariate draw and an independent (r, y) draw under each
/// arm. Returns (mean, standard error).
pub fn potential_outcome_effect<R: Rng + ?Sized>(spec: &ScenarioSpec, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    spec.validate()?;
    let probs = spec.effective_attempt_probs()?;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = draw_x(rng);
        let mut y = [0.0; 2];
        for z in 0..2u8 {
            y[usize::from(z)] = match (&spec.id, &spec.custom_coefficients) {
                (ScenarioId::S4Custom, Some(CustomCoefficients::Selection(c))) => {
                    draw_selection(c, z, x, spec.error, rng).1
                }
                _ => {
                    let r = 1 + sample_categorical(&probs[usize::from(z)], rng);
                    draw_outcome(spec, z, r, x, rng)?
                }
            };
        }
        let d = y[1] - y[0];
        s += d;
        s2 += d * d;
    }
    let nf = n as f64;
    let mean = s / nf;
    Ok((mean, ((s2 / nf - mean * mean) / (nf - 1.0)).sqrt()))
}

/// Sidecar written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub theta_true: f64,
    pub seed: u64,
    pub spec: ScenarioSpec,
}
