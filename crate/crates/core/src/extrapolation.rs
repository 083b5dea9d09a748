//! Identifying priors for the mean of the never-observed pattern K+1.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Completers only: pattern K+1 is excluded.
    None,
    /// α^{(z,K+1)} = α_min.
    #[serde(rename = "pm", alias = "point_mass")]
    PointMass,
    /// U(α_min − C, α_min).
    Unif,
    /// Triangular with mode at the lower limit.
    Tri1,
    /// Triangular with mode at the upper limit.
    Tri2,
}

impl PriorKind {
    pub const ALL: [PriorKind; 5] = [
        PriorKind::None,
        PriorKind::PointMass,
        PriorKind::Unif,
        PriorKind::Tri1,
        PriorKind::Tri2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::None => "none",
            PriorKind::PointMass => "pm",
            PriorKind::Unif => "unif",
            PriorKind::Tri1 => "tri1",
            PriorKind::Tri2 => "tri2",
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PriorKind::None),
            "pm" | "point_mass" => Ok(PriorKind::PointMass),
            "unif" => Ok(PriorKind::Unif),
            "tri1" => Ok(PriorKind::Tri1),
            "tri2" => Ok(PriorKind::Tri2),
            other => Err(Error::Config(format!(
                "unknown extrapolation kind {other:?}; allowed: none, pm, unif, tri1, tri2"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationPriorSpec {
    pub kind: PriorKind,
    /// Sensitivity parameter, in percent of the identified range.
    #[serde(rename = "P")]
    pub p: f64,
}

impl ExtrapolationPriorSpec {
    pub fn new(kind: PriorKind, p: f64) -> Result<Self> {
        let spec = ExtrapolationPriorSpec { kind, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!(
                "P must be a finite nonnegative percent, got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// Row label in the style of the result tables: `none`, `pm`, `unif_10`, ...
    pub fn label(&self) -> String {
        match self.kind {
            PriorKind::None | PriorKind::PointMass => self.kind.to_string(),
            k => format!("{k}_{}", self.p),
        }
    }

    /// The eight prior rows of the sensitivity tables.
    pub fn table_rows() -> Vec<ExtrapolationPriorSpec> {
        let mut rows = vec![
            ExtrapolationPriorSpec {
                kind: PriorKind::None,
                p: 0.0,
            },
            ExtrapolationPriorSpec {
                kind: PriorKind::PointMass,
                p: 0.0,
            },
        ];
        for kind in [PriorKind::Unif, PriorKind::Tri1, PriorKind::Tri2] {
            for p in [10.0, 20.0] {
                rows.push(ExtrapolationPriorSpec { kind, p });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

pub fn compute_bounds(cond_means: &[f64], p: f64) -> Result<ExtrapolationBounds> {
    if cond_means.is_empty() {
        return Err(Error::Contract("no identified conditional means".into()));
    }
    if let Some(bad) = cond_means.iter().find(|m| !m.is_finite()) {
        return Err(Error::Domain(format!("conditional mean {bad} is not finite")));
    }
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("P must be nonnegative, got {p}")));
    }
    let alpha_min = cond_means.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha_max = cond_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExtrapolationBounds {
        alpha_min,
        alpha_max,
        c: (alpha_max - alpha_min) * p / 100.0,
    })
}

/// Inverse CDF of the triangular law on [a, b] with mode `mode`.
pub fn triangular_quantile(u: f64, a: f64, b: f64, mode: f64) -> f64 {
    if b <= a {
        return a;
    }
    let fc = (mode - a) / (b - a);
    if u < fc {
        a + (u * (b - a) * (mode - a)).sqrt()
    } else {
        b - ((1.0 - u) * (b - a) * (b - mode)).sqrt()
    }
}

pub fn sample_extrapolation_mean<R: Rng + ?Sized>(
    spec: &ExtrapolationPriorSpec,
    bounds: &ExtrapolationBounds,
    rng: &mut R,
) -> Result<f64> {
    let (hi, c) = (bounds.alpha_min, bounds.c);
    let lo = hi - c;
    let value = match spec.kind {
        PriorKind::None => {
            return Err(Error::Contract(
                "kind 'none' excludes pattern K+1; no extrapolation mean to draw".into(),
            ))
        }
        _ if c == 0.0 => hi,
        PriorKind::PointMass => hi,
        PriorKind::Unif => lo + c * rng.random::<f64>(),
        PriorKind::Tri1 => triangular_quantile(rng.random::<f64>(), lo, hi, lo),
        PriorKind::Tri2 => triangular_quantile(rng.random::<f64>(), lo, hi, hi),
    };
    Ok(value.clamp(lo, hi))
}

/// Prior mean of the extrapolation mean, used by closed-form checks.
pub fn prior_mean(kind: PriorKind, bounds: &ExtrapolationBounds) -> Option<f64> {
    let (m, c) = (bounds.alpha_min, bounds.c);
    match kind {
        PriorKind::None => None,
        PriorKind::PointMass => Some(m),
        PriorKind::Unif => Some(m - c / 2.0),
        PriorKind::Tri1 => Some(m - 2.0 * c / 3.0),
        PriorKind::Tri2 => Some(m - c / 3.0),
    }
}
