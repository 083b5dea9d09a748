//! JSON run configuration.
//!
//! ```json
//! {
//!   "data": "data.csv",
//!   "draws": "draws.json",
//!   "model": {"K": 9, "conditional": "merged", "H": 20, "n_iter": 50000,
//!             "n_burn": 5000, "thin": 5, "mc_draws": 10000, "seed": 1},
//!   "extrapolation": {"kind": "tri1", "P": 20},
//!   "scenario": {"id": "s2", "n": 500, "error": "normal", "sigma": 2,
//!                "attempt_probs": "quatro", "missing_frac": 0.25},
//!   "bench": {"n_reps": 100, "base_seed": 1, "priors": "table"}
//! }
//! ```
//!
//! Every key is optional. Relative paths are resolved against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::extrapolation::{ExtrapolationPriorSpec, PriorKind};
use crate::model::{MergeMap, ModelConfig};
use crate::simulate::{self, CustomCoefficients, ErrorLaw, ScenarioId, ScenarioSpec};

const TOP_KEYS: &[&str] = &["data", "draws", "model", "extrapolation", "scenario", "bench"];
const MODEL_KEYS: &[&str] = &[
    "K",
    "conditional",
    "merge_map",
    "H",
    "n_iter",
    "n_burn",
    "thin",
    "mc_draws",
    "seed",
];
const EXTRAPOLATION_KEYS: &[&str] = &["kind", "P"];
const SCENARIO_KEYS: &[&str] = &[
    "id",
    "n",
    "error",
    "sigma",
    "attempt_probs",
    "missing_frac",
    "custom_coefficients",
];
const BENCH_KEYS: &[&str] = &["n_reps", "base_seed", "priors"];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_reps: usize,
    pub base_seed: u64,
    pub priors: Vec<ExtrapolationPriorSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub model: ModelConfig,
    pub extrapolation: ExtrapolationPriorSpec,
    pub scenario: ScenarioSpec,
    pub bench: BenchConfig,
}

#[derive(Debug, Default, Deserialize)]
struct RawModel {
    #[serde(rename = "K")]
    k: Option<usize>,
    conditional: Option<Conditional>,
    merge_map: Option<Vec<usize>>,
    #[serde(rename = "H")]
    h: Option<usize>,
    n_iter: Option<usize>,
    n_burn: Option<usize>,
    thin: Option<usize>,
    mc_draws: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Conditional {
    Merged,
    Full,
}

#[derive(Debug, Deserialize)]
struct RawExtrapolation {
    kind: Option<String>,
    #[serde(rename = "P")]
    p: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawAttemptProbs {
    Named(String),
    Explicit([Vec<f64>; 2]),
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    id: Option<String>,
    n: Option<usize>,
    error: Option<String>,
    sigma: Option<f64>,
    attempt_probs: Option<RawAttemptProbs>,
    missing_frac: Option<f64>,
    custom_coefficients: Option<CustomCoefficients>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawPriors {
    Named(String),
    List(Vec<RawExtrapolation>),
}

#[derive(Debug, Deserialize)]
struct RawBench {
    n_reps: Option<usize>,
    base_seed: Option<u64>,
    priors: Option<RawPriors>,
}

fn unknown_keys(value: &Value, prefix: &str, allowed: &[&str], out: &mut Vec<String>) {
    if let Value::Object(map) = value {
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                out.push(if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                });
            }
        }
    }
}

fn section<T: serde::de::DeserializeOwned>(root: &Value, key: &str) -> Result<Option<T>> {
    match root.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("section {key:?}: {e}"))),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, value: &str, allowed: &str) -> Result<T> {
    serde_json::from_value(Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("invalid {what} {value:?}; allowed: {allowed}")))
}

fn model_from(raw: RawModel) -> Result<ModelConfig> {
    let k = raw.k.unwrap_or(simulate::K);
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    let mut cfg = match (raw.merge_map, raw.conditional) {
        (Some(map), _) => {
            let merge = MergeMap::new(map)?;
            if merge.k() != k {
                return Err(Error::Config(format!("merge_map covers K={} but K={k}", merge.k())));
            }
            ModelConfig {
                k,
                k_cond: merge.k_cond(),
                merge,
                ..ModelConfig::full(k)
            }
        }
        (None, Some(Conditional::Full)) => ModelConfig::full(k),
        (None, Some(Conditional::Merged) | None) => {
            if k < 3 {
                return Err(Error::Config(format!("the merged conditional needs K >= 3, got K={k}")));
            }
            ModelConfig::merged(k)
        }
    };
    if let Some(h) = raw.h {
        cfg.h = h;
    }
    if let Some(v) = raw.n_iter {
        cfg.n_iter = v;
    }
    if let Some(v) = raw.n_burn {
        cfg.n_burn = v;
    }
    if let Some(v) = raw.thin {
        cfg.thin = v;
    }
    if let Some(v) = raw.mc_draws {
        cfg.mc_draws = v;
    }
    if let Some(v) = raw.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prior_from(raw: RawExtrapolation) -> Result<ExtrapolationPriorSpec> {
    let kind: PriorKind = match raw.kind {
        Some(k) => k.parse()?,
        None => PriorKind::PointMass,
    };
    let p = raw.p.unwrap_or(match kind {
        PriorKind::None | PriorKind::PointMass => 0.0,
        _ => 10.0,
    });
    ExtrapolationPriorSpec::new(kind, p)
}

fn scenario_from(raw: RawScenario) -> Result<ScenarioSpec> {
    let id: ScenarioId = match raw.id {
        Some(s) => parse_enum("scenario id", &s, "s2, s3, s5, s6, s1_custom, s4_custom")?,
        None => ScenarioId::S2,
    };
    let mut spec = ScenarioSpec::new(id, raw.n.unwrap_or(500));
    if let Some(e) = raw.error {
        spec.error = parse_enum::<ErrorLaw>("error law", &e, "normal, t3, skew_normal")?;
    }
    if let Some(s) = raw.sigma {
        spec.sigma = s;
    }
    match raw.attempt_probs {
        None => {}
        Some(RawAttemptProbs::Named(name)) => match name.as_str() {
            "quatro" => {
                let (c, t) = simulate::quatro_attempt_probs();
                spec.attempt_probs = [c, t];
            }
            "pooled" => {
                let p = simulate::quatro_pooled_attempt_probs();
                spec.attempt_probs = [p.clone(), p];
            }
            other => {
                return Err(Error::Config(format!(
                    "invalid attempt_probs {other:?}; allowed: quatro, pooled, or two explicit simplexes"
                )))
            }
        },
        Some(RawAttemptProbs::Explicit(p)) => spec.attempt_probs = p,
    }
    spec.missing_frac_override = raw.missing_frac;
    spec.custom_coefficients = raw.custom_coefficients;
    spec.validate()?;
    Ok(spec)
}

fn bench_from(raw: Option<RawBench>, default_seed: u64) -> Result<BenchConfig> {
    let (n_reps, base_seed, priors) = match raw {
        None => (100, None, None),
        Some(b) => (b.n_reps.unwrap_or(100), b.base_seed, b.priors),
    };
    if n_reps == 0 {
        return Err(Error::Config("bench.n_reps must be positive".into()));
    }
    let priors = match priors {
        None => ExtrapolationPriorSpec::table_rows(),
        Some(RawPriors::Named(n)) if n == "table" => ExtrapolationPriorSpec::table_rows(),
        Some(RawPriors::Named(n)) => {
            return Err(Error::Config(format!(
                "invalid bench.priors {n:?}; allowed: \"table\" or a list"
            )))
        }
        Some(RawPriors::List(v)) => v.into_iter().map(prior_from).collect::<Result<_>>()?,
    };
    if priors.is_empty() {
        return Err(Error::Config("bench.priors is empty".into()));
    }
    Ok(BenchConfig {
        n_reps,
        base_seed: base_seed.unwrap_or(default_seed),
        priors,
    })
}

/// Parses a config document. `base_dir` anchors relative paths.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    let mut unknown = Vec::new();
    unknown_keys(&root, "", TOP_KEYS, &mut unknown);
    for (key, allowed) in [
        ("model", MODEL_KEYS),
        ("extrapolation", EXTRAPOLATION_KEYS),
        ("scenario", SCENARIO_KEYS),
        ("bench", BENCH_KEYS),
    ] {
        if let Some(v) = root.get(key) {
            unknown_keys(v, key, allowed, &mut unknown);
        }
    }
    if let Some(Value::Array(list)) = root.get("bench").and_then(|b| b.get("priors")) {
        for (i, p) in list.iter().enumerate() {
            unknown_keys(p, &format!("bench.priors[{i}]"), EXTRAPOLATION_KEYS, &mut unknown);
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
    }

    let path = |key: &str| -> Result<Option<PathBuf>> {
        match root.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => {
                let p = PathBuf::from(s);
                Ok(Some(if p.is_absolute() { p } else { base_dir.join(p) }))
            }
            Some(_) => Err(Error::Config(format!("{key} must be a path string"))),
        }
    };
    let model = model_from(section(&root, "model")?.unwrap_or_default())?;
    let extrapolation = match section::<RawExtrapolation>(&root, "extrapolation")? {
        Some(raw) => prior_from(raw)?,
        None => ExtrapolationPriorSpec {
            kind: PriorKind::PointMass,
            p: 0.0,
        },
    };
    let scenario = match section::<RawScenario>(&root, "scenario")? {
        Some(raw) => scenario_from(raw)?,
        None => ScenarioSpec::new(ScenarioId::S2, 500),
    };
    let bench = bench_from(section(&root, "bench")?, model.seed)?;
    Ok(RunConfig {
        data: path("data")?,
        draws: path("draws")?,
        model,
        extrapolation,
        scenario,
        bench,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("/cfg"))
    }

    #[test]
    fn defaults() {
        let c = parse(r#"{"data": "d.csv"}"#).unwrap();
        assert_eq!(c.data, Some(PathBuf::from("/cfg/d.csv")));
        assert_eq!((c.model.n_iter, c.model.n_burn, c.model.thin), (50_000, 5_000, 5));
        assert_eq!(
            (c.model.h, c.model.mc_draws, c.model.k, c.model.k_cond),
            (20, 10_000, 9, 3)
        );
        assert_eq!(c.bench.priors.len(), 8);
    }

    #[test]
    fn prior_spec() {
        let c = parse(r#"{"extrapolation": {"kind": "tri1", "P": 20}}"#).unwrap();
        assert_eq!(
            c.extrapolation,
            ExtrapolationPriorSpec {
                kind: PriorKind::Tri1,
                p: 20.0
            }
        );
        assert!(matches!(
            parse(r#"{"extrapolation": {"kind": "unif", "P": -5}}"#),
            Err(Error::Config(_))
        ));
        let err = parse(r#"{"extrapolation": {"kind": "beta"}}"#).unwrap_err().to_string();
        assert!(err.contains("allowed: none, pm, unif, tri1, tri2"), "{err}");
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = parse(r#"{"dat": 1, "model": {"HH": 3, "H": 2}, "bench": {"priors": [{"kind": "pm", "Q": 1}]}}"#)
            .unwrap_err()
            .to_string();
        for k in ["dat", "model.HH", "bench.priors[0].Q"] {
            assert!(err.contains(k), "{err}");
        }
        assert!(!err.contains("model.H,"));
    }

    #[test]
    fn invalid_enums_list_allowed_values() {
        let err = parse(r#"{"scenario": {"error": "cauchy"}}"#).unwrap_err().to_string();
        assert!(err.contains("normal, t3, skew_normal"), "{err}");
        let err = parse(r#"{"scenario": {"id": "s9"}}"#).unwrap_err().to_string();
        assert!(err.contains("s1_custom"), "{err}");
    }

    #[test]
    fn model_variants() {
        let c = parse(r#"{"model": {"K": 4, "conditional": "full", "H": 1, "n_iter": 10, "n_burn": 5, "thin": 5}}"#)
            .unwrap();
        assert_eq!(
            (c.model.k, c.model.k_cond, c.model.h, c.model.n_retained()),
            (4, 4, 1, 1)
        );
        let c = parse(r#"{"model": {"K": 3, "merge_map": [1, 1, 2, 3]}}"#).unwrap();
        assert_eq!(c.model.k_cond, 2);
        assert!(parse(r#"{"model": {"K": 2}}"#).is_err());
        assert!(parse(r#"{"model": {"n_iter": 10, "n_burn": 10}}"#).is_err());
    }

    #[test]
    fn scenario_options() {
        let c = parse(
            r#"{"scenario": {"id": "s6", "n": 50, "sigma": 10, "attempt_probs": "pooled", "missing_frac": 0.35}}"#,
        )
        .unwrap();
        assert_eq!(c.scenario.id, ScenarioId::S6);
        assert_eq!(c.scenario.attempt_probs[0], c.scenario.attempt_probs[1]);
        assert_eq!(c.scenario.missing_frac_override, Some(0.35));
        assert!(parse(r#"{"scenario": {"id": "s4_custom"}}"#).is_err());
    }
}
