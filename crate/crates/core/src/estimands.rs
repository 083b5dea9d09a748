//! Monte-Carlo functionals of posterior draws: E(Y | Z = z), the treatment
//! effect θ = E(Y | Z = 1) − E(Y | Z = 0), and the pattern-specific means
//! used for goodness of fit.
//!
//! Integration happens on the standardized scale; results are mapped back to
//! the original outcome scale with the draw's standardization record.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolation::{compute_bounds, sample_extrapolation_mean, ExtrapolationPriorSpec, PriorKind};
use crate::math::{self, sample_categorical};
use crate::model::{Covariates, DrawTables, MergeMap, PosteriorDraw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_length: f64,
    pub n_draws: usize,
}

/// Posterior mean and equal-tail 95% interval.
pub fn summarize_posterior(samples: &[f64]) -> Result<EstimandSummary> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot summarize an empty sample".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite posterior sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ci_low = math::quantile_sorted(&sorted, 0.025);
    let ci_high = math::quantile_sorted(&sorted, 0.975);
    Ok(EstimandSummary {
        mean: math::mean(samples),
        ci_low,
        ci_high,
        ci_length: ci_high - ci_low,
        n_draws: samples.len(),
    })
}

/// Precomputed view of one draw for repeated Monte-Carlo evaluation.
struct DrawEvaluator<'a> {
    draw: &'a PosteriorDraw,
    tables: DrawTables,
    merge: &'a MergeMap,
    k: usize,
    k_cond: usize,
    /// Linear-scale ξ, row-major H × (K + 1).
    xi: Vec<f64>,
    /// ξ restricted to 1..=K per component, for the completers-only estimand.
    xi_completers: Vec<f64>,
    // Scratch buffers.
    lw: Vec<f64>,
    p: Vec<f64>,
    cond: Vec<f64>,
    lin: Vec<f64>,
}

impl<'a> DrawEvaluator<'a> {
    fn new(draw: &'a PosteriorDraw, merge: &'a MergeMap) -> Result<Self> {
        let k = merge.k();
        let k_cond = merge.k_cond();
        if draw.clusters.is_empty() {
            return Err(Error::Contract("draw has no components".into()));
        }
        for c in &draw.clusters {
            if c.xi.len() != k + 1 || c.alpha.len() != 2 * k_cond {
                return Err(Error::Contract(format!(
                    "draw shape (|xi| = {}, |alpha| = {}) does not match K = {k}, K_cond = {k_cond}",
                    c.xi.len(),
                    c.alpha.len()
                )));
            }
        }
        let h = draw.h();
        let xi: Vec<f64> = draw.clusters.iter().flat_map(|c| c.xi.iter().copied()).collect();
        let xi_completers = draw.clusters.iter().flat_map(|c| c.xi[..k].iter().copied()).collect();
        Ok(DrawEvaluator {
            draw,
            tables: DrawTables::new(draw),
            merge,
            k,
            k_cond,
            xi,
            xi_completers,
            lw: Vec::with_capacity(h),
            p: Vec::with_capacity(h),
            cond: Vec::with_capacity(k),
            lin: vec![0.0; h],
        })
    }

    fn sample_covariates<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> Covariates {
        let c = &self.draw.clusters[l];
        let x_cat = 1 + sample_categorical(&c.eta_cat, rng);
        let x_cont = self.draw.layout.continuous.then(|| math::normal(c.m, c.tau2, rng));
        Covariates { x_cat, x_cont }
    }

    /// Fills `p` with π_h p(x, z; η_h) (normalized) and `lin` with x·β_h.
    fn prepare(&mut self, x: &Covariates, z: u8) -> Result<()> {
        self.tables.covariate_log_weights(x, z, &mut self.lw);
        let max = self.lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Degenerate(
                "sampled covariate profile has zero weight in every component".into(),
            ));
        }
        self.p.clear();
        self.p.extend(self.lw.iter().map(|l| (l - max).exp()));
        let xc = x.x_cont.unwrap_or(0.0);
        for (h, c) in self.draw.clusters.iter().enumerate() {
            self.lin[h] = self.draw.layout.linear_predictor(&c.beta, x.x_cat, xc);
        }
        Ok(())
    }

    /// Σ_h w_h(r, x, z) (α_h[z, merge(r)] + x·β_h) after `prepare`.
    fn conditional_mean(&mut self, r: usize, z: u8) -> Result<f64> {
        let k1 = self.k + 1;
        let cell = usize::from(z) * self.k_cond + self.merge.get(r) - 1;
        let (mut num, mut den) = (0.0, 0.0);
        for (h, c) in self.draw.clusters.iter().enumerate() {
            let w = self.p[h] * self.xi[h * k1 + r - 1];
            num += w * (c.alpha[cell] + self.lin[h]);
            den += w;
        }
        if !(den > 0.0) {
            return Err(Error::Degenerate(format!(
                "pattern r={r} has zero weight at the sampled covariates"
            )));
        }
        Ok(num / den)
    }

    /// One Monte-Carlo sample of E(Y | Z = z) on the standardized scale.
    fn sample_y_given_z<R: Rng + ?Sized>(&mut self, z: u8, spec: &ExtrapolationPriorSpec, rng: &mut R) -> Result<f64> {
        let l = sample_categorical(&self.draw.sticks.pi, rng);
        let x = self.sample_covariates(l, rng);
        self.prepare(&x, z)?;
        let m = sample_categorical(&self.p, rng);
        let r = if spec.kind == PriorKind::None {
            let row = &self.xi_completers[m * self.k..(m + 1) * self.k];
            if !(row.iter().sum::<f64>() > 0.0) {
                return Err(Error::Degenerate("component puts no mass on completed patterns".into()));
            }
            1 + sample_categorical(row, rng)
        } else {
            1 + sample_categorical(&self.xi[m * (self.k + 1)..(m + 1) * (self.k + 1)], rng)
        };
        if r <= self.k {
            return self.conditional_mean(r, z);
        }
        let mut means = std::mem::take(&mut self.cond);
        means.clear();
        for k in 1..=self.k {
            means.push(self.conditional_mean(k, z)?);
        }
        let bounds = compute_bounds(&means, spec.p);
        self.cond = means;
        sample_extrapolation_mean(spec, &bounds?, rng)
    }

    /// One Monte-Carlo sample of E(Y | Z = z, R ∈ group) on the standardized
    /// scale, where `group` is a set of completed patterns.
    fn sample_gof<R: Rng + ?Sized>(&mut self, z: u8, group: &[usize], joint: &[f64], rng: &mut R) -> Result<f64> {
        let idx = sample_categorical(joint, rng);
        let (l, r) = (idx / group.len(), group[idx % group.len()]);
        let x = self.sample_covariates(l, rng);
        self.prepare(&x, z)?;
        self.conditional_mean(r, z)
    }

    /// Joint weights over (component l, pattern r ∈ group) ∝ π_l p(z) ξ_l[r].
    fn gof_joint(&self, z: u8, group: &[usize]) -> Result<Vec<f64>> {
        let k1 = self.k + 1;
        let pz = |c: &crate::model::ClusterParams| if z == 1 { c.p_z } else { 1.0 - c.p_z };
        let joint: Vec<f64> = self
            .draw
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(h, c)| {
                let base = self.draw.sticks.pi[h] * pz(c);
                group.iter().map(move |&r| base * self.xi[h * k1 + r - 1])
            })
            .collect();
        if !(joint.iter().sum::<f64>() > 0.0) {
            return Err(Error::Degenerate(format!(
                "patterns {group:?} have zero posterior weight in arm {z}"
            )));
        }
        Ok(joint)
    }
}

/// Mean and Monte-Carlo standard error of E(Y | Z = z), original scale.
pub fn mc_expectation_with_se<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    merge: &MergeMap,
    z: u8,
    spec: &ExtrapolationPriorSpec,
    s: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if s == 0 {
        return Err(Error::Contract("need at least one Monte-Carlo sample".into()));
    }
    if z > 1 {
        return Err(Error::Domain(format!("arm {z} is not 0 or 1")));
    }
    spec.validate()?;
    let mut ev = DrawEvaluator::new(draw, merge)?;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..s {
        let v = ev.sample_y_given_z(z, spec, rng)?;
        sum += v;
        sum2 += v * v;
    }
    Ok(back_transform(draw, sum, sum2, s))
}

fn back_transform(draw: &PosteriorDraw, sum: f64, sum2: f64, s: usize) -> (f64, f64) {
    let n = s as f64;
    let mean = sum / n;
    let var = if s > 1 {
        ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let st = &draw.standardization;
    (st.y_inverse(mean), st.y_scale * (var / n).sqrt())
}

/// E(Y | Z = z) for one posterior draw, on the original outcome scale.
pub fn mc_expectation_y_given_z<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    merge: &MergeMap,
    z: u8,
    spec: &ExtrapolationPriorSpec,
    s: usize,
    rng: &mut R,
) -> Result<f64> {
    mc_expectation_with_se(draw, merge, z, spec, s, rng).map(|(m, _)| m)
}

/// Independent RNG for (draw index, stream) under a base seed.
pub fn substream(seed: u64, draw_index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((draw_index as u64) << 8 | stream);
    rng
}

/// θ per retained draw and its posterior summary. Both arms of draw `i`
/// replay substream `i` of `seed` (common random numbers), so results do not
/// depend on scheduling and arm-symmetric draws give θ = 0 exactly.
pub fn treatment_effect(
    draws: &[PosteriorDraw],
    merge: &MergeMap,
    spec: &ExtrapolationPriorSpec,
    s: usize,
    seed: u64,
) -> Result<(Vec<f64>, EstimandSummary)> {
    if draws.len() < 2 {
        return Err(Error::Contract(format!(
            "need at least two posterior draws, got {}",
            draws.len()
        )));
    }
    let thetas = draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let e1 = mc_expectation_y_given_z(d, merge, 1, spec, s, &mut substream(seed, i, 0))?;
            let e0 = mc_expectation_y_given_z(d, merge, 0, spec, s, &mut substream(seed, i, 0))?;
            Ok(e1 - e0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let summary = summarize_posterior(&thetas)?;
    Ok((thetas, summary))
}

/// E(Y | Z = z, R = r) for a completed pattern r, original scale.
pub fn gof_expectation<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    merge: &MergeMap,
    z: u8,
    r: usize,
    s: usize,
    rng: &mut R,
) -> Result<f64> {
    if r == 0 || r > merge.k() {
        return Err(Error::Contract(format!(
            "goodness of fit needs a completed pattern 1..={}, got {r}",
            merge.k()
        )));
    }
    gof_group_expectation_with_se(draw, merge, z, &[r], s, rng).map(|(m, _)| m)
}

/// E(Y | Z = z, R* = r_star) for a merged level of completed patterns.
pub fn gof_level_expectation<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    merge: &MergeMap,
    z: u8,
    r_star: usize,
    s: usize,
    rng: &mut R,
) -> Result<f64> {
    if r_star == 0 || r_star > merge.k_cond() {
        return Err(Error::Contract(format!(
            "goodness of fit needs a completed level 1..={}, got {r_star}",
            merge.k_cond()
        )));
    }
    gof_group_expectation_with_se(draw, merge, z, &merge.group(r_star), s, rng).map(|(m, _)| m)
}

/// Mean and MC standard error of E(Y | Z = z, R ∈ group), original scale.
pub fn gof_group_expectation_with_se<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    merge: &MergeMap,
    z: u8,
    group: &[usize],
    s: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if s == 0 {
        return Err(Error::Contract("need at least one Monte-Carlo sample".into()));
    }
    if group.is_empty() || group.iter().any(|&r| r == 0 || r > merge.k()) {
        return Err(Error::Contract(format!(
            "patterns {group:?} are not all completed patterns"
        )));
    }
    let mut ev = DrawEvaluator::new(draw, merge)?;
    let joint = ev.gof_joint(z, group)?;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..s {
        let v = ev.sample_gof(z, group, &joint, rng)?;
        sum += v;
        sum2 += v * v;
    }
    Ok(back_transform(draw, sum, sum2, s))
}

/// Posterior summary of the GOF mean for every (z, r*) completed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofCell {
    pub z: u8,
    pub r_star: usize,
    pub summary: EstimandSummary,
    /// Mean of the observed outcomes in the cell, if any were observed.
    pub observed_mean: Option<f64>,
    pub n_observed: usize,
}

/// GOF table over all completed cells. Draw `i`, cell `c` uses substream
/// (i, 2 + c) of `seed`.
pub fn gof_table(
    draws: &[PosteriorDraw],
    merge: &MergeMap,
    s: usize,
    seed: u64,
    observed: Option<&crate::model::Dataset>,
) -> Result<Vec<GofCell>> {
    if draws.is_empty() {
        return Err(Error::Contract("no posterior draws".into()));
    }
    let cells: Vec<(u8, usize)> = (0..2u8)
        .flat_map(|z| (1..=merge.k_cond()).map(move |r| (z, r)))
        .collect();
    let per_draw = draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            cells
                .iter()
                .enumerate()
                .map(|(c, &(z, r_star))| {
                    let mut rng = substream(seed, i, 2 + c as u64);
                    gof_level_expectation(d, merge, z, r_star, s, &mut rng)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    cells
        .iter()
        .enumerate()
        .map(|(c, &(z, r_star))| {
            let samples: Vec<f64> = per_draw.iter().map(|v| v[c]).collect();
            let obs: Vec<f64> = observed
                .map(|ds| {
                    ds.records
                        .iter()
                        .filter(|rec| rec.z == z && rec.r <= merge.k() && merge.get(rec.r) == r_star)
                        .filter_map(|rec| rec.y)
                        .collect()
                })
                .unwrap_or_default();
            Ok(GofCell {
                z,
                r_star,
                summary: summarize_posterior(&samples)?,
                observed_mean: (!obs.is_empty()).then(|| math::mean(&obs)),
                n_observed: obs.len(),
            })
        })
        .collect()
}
