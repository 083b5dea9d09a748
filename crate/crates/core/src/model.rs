//! Domain types of the observed-data mixture and the formulas every other
//! module consumes: stick-breaking weights, the per-component joint kernel
//! p(y | r, x, z) p(r) p(x) p(z), and the three families of posterior
//! mixture weights used by the Monte-Carlo estimands.
//!
//! All density arithmetic is done on the log scale. With ten attempt levels
//! and a few dozen components the linear-scale products underflow routinely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::HyperState;
use crate::math::{log_sum_exp, normal_ln_pdf};

/// One subject. `r` is the 1-based attempt index; `r = K + 1` means the
/// outcome was never collected. `x_cat` is a 1-based level index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub y: Option<f64>,
    pub r: usize,
    pub x_cat: usize,
    pub x_cont: Option<f64>,
    pub z: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<AttemptRecord>,
    /// Maximum number of attempts; pattern `K + 1` is non-response.
    pub k: usize,
    /// Number of levels of the categorical covariate.
    pub n_levels: usize,
}

impl Dataset {
    pub fn new(records: Vec<AttemptRecord>, k: usize, n_levels: usize) -> Result<Self> {
        let ds = Dataset { records, k, n_levels };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Domain("K must be at least 1".into()));
        }
        if self.n_levels == 0 {
            return Err(Error::Domain("need at least one covariate level".into()));
        }
        for (i, rec) in self.records.iter().enumerate() {
            if rec.r == 0 || rec.r > self.k + 1 {
                return Err(Error::Domain(format!(
                    "record {i}: attempt {} outside 1..={}",
                    rec.r,
                    self.k + 1
                )));
            }
            if rec.z > 1 {
                return Err(Error::Domain(format!("record {i}: treatment {} not binary", rec.z)));
            }
            if rec.x_cat == 0 || rec.x_cat > self.n_levels {
                return Err(Error::Domain(format!(
                    "record {i}: level {} outside 1..={}",
                    rec.x_cat, self.n_levels
                )));
            }
            if rec.y.is_some_and(|y| !y.is_finite()) || rec.x_cont.is_some_and(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("record {i}: non-finite value")));
            }
        }
        Ok(())
    }

    /// Whether any record carries the continuous covariate. When none does,
    /// the model drops that covariate entirely.
    pub fn has_continuous(&self) -> bool {
        self.records.iter().any(|r| r.x_cont.is_some())
    }

    pub fn layout(&self) -> CovariateLayout {
        CovariateLayout {
            n_levels: self.n_levels,
            continuous: self.has_continuous(),
        }
    }
}

/// Shape of the regression covariate vector: dummies for levels 2..=L,
/// followed by the continuous covariate when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateLayout {
    pub n_levels: usize,
    pub continuous: bool,
}

impl CovariateLayout {
    pub fn n_covariates(&self) -> usize {
        self.n_levels - 1 + usize::from(self.continuous)
    }

    /// Index of the continuous covariate in the regression vector.
    pub fn cont_index(&self) -> Option<usize> {
        self.continuous.then_some(self.n_levels - 1)
    }

    /// x·β for a level and an (already filled-in) continuous value.
    #[inline]
    pub fn linear_predictor(&self, beta: &[f64], x_cat: usize, x_cont: f64) -> f64 {
        let mut s = 0.0;
        if x_cat > 1 {
            s += beta[x_cat - 2];
        }
        if self.continuous {
            s += beta[self.n_levels - 1] * x_cont;
        }
        s
    }

    pub fn design_row(&self, x_cat: usize, x_cont: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((2..=self.n_levels).map(|l| if l == x_cat { 1.0 } else { 0.0 }));
        if self.continuous {
            out.push(x_cont);
        }
    }
}

/// Monotone map from raw attempt `r ∈ 1..=K+1` onto the attempt levels the
/// outcome conditional depends on, `r* ∈ 1..=K_cond+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MergeMap(Vec<usize>);

impl MergeMap {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        if map.len() < 2 {
            return Err(Error::Config("merge map needs at least two entries".into()));
        }
        let top = *map.last().unwrap();
        if map[0] != 1 {
            return Err(Error::Config("merge map must send attempt 1 to level 1".into()));
        }
        for w in map.windows(2) {
            if w[1] < w[0] || w[1] > w[0] + 1 {
                return Err(Error::Config(format!(
                    "merge map {map:?} must be non-decreasing without gaps"
                )));
            }
        }
        // The non-response pattern must be its own level.
        if map[map.len() - 2] != top - 1 {
            return Err(Error::Config(format!(
                "merge map {map:?} must reserve its top level for attempt K+1"
            )));
        }
        Ok(MergeMap(map))
    }

    pub fn identity(k: usize) -> Self {
        MergeMap((1..=k + 1).collect())
    }

    /// 1, 2 kept; 3..=K merged into 3; K+1 mapped to 4.
    pub fn merged_three(k: usize) -> Self {
        assert!(k >= 3, "merged map needs K >= 3");
        MergeMap((1..=k + 1).map(|r| if r <= k { r.min(3) } else { 4 }).collect())
    }

    pub fn k(&self) -> usize {
        self.0.len() - 1
    }

    pub fn k_cond(&self) -> usize {
        self.0[self.0.len() - 1] - 1
    }

    pub fn apply(&self, r: usize) -> Result<usize> {
        if r == 0 || r > self.0.len() {
            return Err(Error::Domain(format!("attempt {r} outside 1..={}", self.0.len())));
        }
        Ok(self.0[r - 1])
    }

    #[inline]
    pub(crate) fn get(&self, r: usize) -> usize {
        self.0[r - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Raw attempts that map onto merged level `r_star`.
    pub fn group(&self, r_star: usize) -> Vec<usize> {
        (1..=self.0.len()).filter(|&r| self.0[r - 1] == r_star).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub k: usize,
    pub k_cond: usize,
    pub merge: MergeMap,
    /// Truncation level of the stick-breaking prior.
    pub h: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

impl ModelConfig {
    fn with_merge(merge: MergeMap) -> Self {
        ModelConfig {
            k: merge.k(),
            k_cond: merge.k_cond(),
            merge,
            h: 20,
            n_iter: 50_000,
            n_burn: 5_000,
            thin: 5,
            mc_draws: 10_000,
            seed: 1,
        }
    }

    /// Merged-conditional model (attempts 3..=K share one intercept) with
    /// the long-run sampler schedule.
    pub fn merged(k: usize) -> Self {
        Self::with_merge(MergeMap::merged_three(k))
    }

    /// Outcome conditional depending on every attempt level.
    pub fn full(k: usize) -> Self {
        Self::with_merge(MergeMap::identity(k))
    }

    pub fn schedule(mut self, n_iter: usize, n_burn: usize, thin: usize) -> Self {
        self.n_iter = n_iter;
        self.n_burn = n_burn;
        self.thin = thin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.merge.k() != self.k || self.merge.k_cond() != self.k_cond {
            return Err(Error::Config(format!(
                "merge map covers K={}, K_cond={} but config says K={}, K_cond={}",
                self.merge.k(),
                self.merge.k_cond(),
                self.k,
                self.k_cond
            )));
        }
        if self.h < 1 {
            return Err(Error::Config("truncation level H must be positive".into()));
        }
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_burn >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.n_burn, self.n_iter
            )));
        }
        if self.mc_draws == 0 {
            return Err(Error::Config("mc_draws must be positive".into()));
        }
        Ok(())
    }

    /// Number of retained draws for this schedule.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }
}

/// Affine map taking raw outcomes/covariates to mean 0, variance 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub y_center: f64,
    pub y_scale: f64,
    pub x_center: f64,
    pub x_scale: f64,
}

impl StandardizationRecord {
    pub const IDENTITY: StandardizationRecord = StandardizationRecord {
        y_center: 0.0,
        y_scale: 1.0,
        x_center: 0.0,
        x_scale: 1.0,
    };

    pub fn y_forward(&self, y: f64) -> f64 {
        (y - self.y_center) / self.y_scale
    }
    pub fn y_inverse(&self, y: f64) -> f64 {
        self.y_center + self.y_scale * y
    }
    pub fn x_forward(&self, x: f64) -> f64 {
        (x - self.x_center) / self.x_scale
    }
    pub fn x_inverse(&self, x: f64) -> f64 {
        self.x_center + self.x_scale * x
    }
}

/// Target variance of standardized columns.
pub const STANDARDIZED_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Intercepts, row-major over (z, r*) with r* in 1..=K_cond.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Attempt distribution over 1..=K+1.
    pub xi: Vec<f64>,
    pub eta_cat: Vec<f64>,
    pub m: f64,
    pub tau2: f64,
    pub p_z: f64,
}

impl ClusterParams {
    #[inline]
    pub fn alpha_at(&self, z: u8, r_star: usize, k_cond: usize) -> f64 {
        self.alpha[usize::from(z) * k_cond + r_star - 1]
    }

    pub fn validate(&self, k: usize, k_cond: usize, layout: &CovariateLayout) -> Result<()> {
        let simplex_ok = |p: &[f64]| p.iter().all(|&v| v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        if self.alpha.len() != 2 * k_cond {
            return Err(Error::Contract(format!(
                "alpha has {} entries, expected {}",
                self.alpha.len(),
                2 * k_cond
            )));
        }
        if self.beta.len() != layout.n_covariates() {
            return Err(Error::Contract(format!(
                "beta has {} entries, expected {}",
                self.beta.len(),
                layout.n_covariates()
            )));
        }
        if self.xi.len() != k + 1 || !simplex_ok(&self.xi) {
            return Err(Error::Contract("xi is not a simplex over 1..=K+1".into()));
        }
        if self.eta_cat.len() != layout.n_levels || !simplex_ok(&self.eta_cat) {
            return Err(Error::Contract("eta_cat is not a simplex over the levels".into()));
        }
        if !(self.sigma2 > 0.0 && self.tau2 > 0.0) || !self.sigma2.is_finite() || !self.tau2.is_finite() {
            return Err(Error::Contract("variances must be positive and finite".into()));
        }
        if !(self.p_z > 0.0 && self.p_z < 1.0) {
            return Err(Error::Contract(format!("p_z = {} outside (0, 1)", self.p_z)));
        }
        Ok(())
    }

    #[inline]
    fn ln_p_z(&self, z: u8) -> f64 {
        if z == 1 {
            self.p_z.ln()
        } else {
            (1.0 - self.p_z).ln()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickWeights {
    pub v: Vec<f64>,
    pub pi: Vec<f64>,
}

impl StickWeights {
    pub fn from_fractions(v: Vec<f64>) -> Result<Self> {
        let pi = stick_break(&v)?;
        Ok(StickWeights { v, pi })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// π_j = v_j ∏_{s<j} (1 − v_s). The final fraction must be exactly one so
/// that the weights exhaust the stick.
pub fn stick_break(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Contract("no stick fractions".into()));
    }
    if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("stick fraction {bad} outside [0, 1]")));
    }
    if v[v.len() - 1] != 1.0 {
        return Err(Error::Contract("final stick fraction must equal 1".into()));
    }
    let mut remaining = 1.0;
    let mut pi = Vec::with_capacity(v.len());
    for &vj in v {
        pi.push(vj * remaining);
        remaining *= 1.0 - vj;
    }
    Ok(pi)
}

/// One retained state of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub sticks: StickWeights,
    pub clusters: Vec<ClusterParams>,
    pub hypers: HyperState,
    pub standardization: StandardizationRecord,
    pub layout: CovariateLayout,
}

impl PosteriorDraw {
    pub fn h(&self) -> usize {
        self.clusters.len()
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.clusters.len() != self.sticks.len() {
            return Err(Error::Contract(format!(
                "{} clusters but {} stick weights",
                self.clusters.len(),
                self.sticks.len()
            )));
        }
        if (self.sticks.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Contract("stick weights do not sum to 1".into()));
        }
        for c in &self.clusters {
            c.validate(cfg.k, cfg.k_cond, &self.layout)?;
        }
        Ok(())
    }

    /// Copy with component labels permuted: new component `j` is old
    /// component `perm[j]`. Stick fractions are recomputed from the permuted
    /// weights so the result is again a valid draw.
    pub fn permuted(&self, perm: &[usize]) -> PosteriorDraw {
        let pi: Vec<f64> = perm.iter().map(|&j| self.sticks.pi[j]).collect();
        let mut v = Vec::with_capacity(pi.len());
        let mut remaining = 1.0;
        for (j, &p) in pi.iter().enumerate() {
            if j + 1 == pi.len() || remaining <= 0.0 {
                v.push(if j + 1 == pi.len() { 1.0 } else { 0.0 });
            } else {
                v.push((p / remaining).clamp(0.0, 1.0));
            }
            remaining -= p;
        }
        PosteriorDraw {
            sticks: StickWeights { v, pi },
            clusters: perm.iter().map(|&j| self.clusters[j].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Covariate values of one subject on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub x_cat: usize,
    pub x_cont: Option<f64>,
}

impl From<&AttemptRecord> for Covariates {
    fn from(r: &AttemptRecord) -> Self {
        Covariates {
            x_cat: r.x_cat,
            x_cont: r.x_cont,
        }
    }
}

/// Log of the per-component joint kernel. The outcome factor is omitted
/// when `y` is missing, the continuous-covariate factor when `x_cont` is.
pub fn cluster_log_kernel(
    rec: &AttemptRecord,
    params: &ClusterParams,
    cfg: &ModelConfig,
    layout: &CovariateLayout,
) -> Result<f64> {
    if rec.r == 0 || rec.r > cfg.k + 1 {
        return Err(Error::Domain(format!("attempt {} outside 1..={}", rec.r, cfg.k + 1)));
    }
    if rec.x_cat == 0 || rec.x_cat > params.eta_cat.len() {
        return Err(Error::Domain(format!("level {} out of range", rec.x_cat)));
    }
    let mut lp = params.xi[rec.r - 1].ln() + params.eta_cat[rec.x_cat - 1].ln() + params.ln_p_z(rec.z);
    if let Some(x) = rec.x_cont.filter(|_| layout.continuous) {
        lp += normal_ln_pdf(x, params.m, params.tau2);
    }
    if let Some(y) = rec.y {
        let r_star = cfg.merge.get(rec.r);
        if r_star > cfg.k_cond {
            return Err(Error::Domain(format!(
                "observed outcome in non-response pattern r={}",
                rec.r
            )));
        }
        let mean = params.alpha_at(rec.z, r_star, cfg.k_cond)
            + layout.linear_predictor(&params.beta, rec.x_cat, rec.x_cont.unwrap_or(0.0));
        lp += normal_ln_pdf(y, mean, params.sigma2);
    }
    Ok(lp)
}

pub fn cluster_kernel(
    rec: &AttemptRecord,
    params: &ClusterParams,
    cfg: &ModelConfig,
    layout: &CovariateLayout,
) -> Result<f64> {
    cluster_log_kernel(rec, params, cfg, layout).map(f64::exp)
}

/// Per-draw tables of log weights and log probabilities, so that repeated
/// weight evaluations cost O(H) each.
#[derive(Debug, Clone)]
pub struct DrawTables {
    pub h: usize,
    pub ln_pi: Vec<f64>,
    /// ln p(z = 0), ln p(z = 1) per component.
    pub ln_pz: Vec<[f64; 2]>,
    /// Row-major H × (K + 1).
    pub ln_xi: Vec<f64>,
    pub ln_eta: Vec<f64>,
    pub m: Vec<f64>,
    pub tau2: Vec<f64>,
    pub ln_tau2: Vec<f64>,
    pub k: usize,
    pub n_levels: usize,
    pub continuous: bool,
}

impl DrawTables {
    pub fn new(draw: &PosteriorDraw) -> Self {
        let h = draw.h();
        let k = draw.clusters[0].xi.len() - 1;
        let n_levels = draw.layout.n_levels;
        let mut t = DrawTables {
            h,
            ln_pi: draw.sticks.pi.iter().map(|p| p.ln()).collect(),
            ln_pz: Vec::with_capacity(h),
            ln_xi: Vec::with_capacity(h * (k + 1)),
            ln_eta: Vec::with_capacity(h * n_levels),
            m: Vec::with_capacity(h),
            tau2: Vec::with_capacity(h),
            ln_tau2: Vec::with_capacity(h),
            k,
            n_levels,
            continuous: draw.layout.continuous,
        };
        for c in &draw.clusters {
            t.ln_pz.push([(1.0 - c.p_z).ln(), c.p_z.ln()]);
            t.ln_xi.extend(c.xi.iter().map(|p| p.ln()));
            t.ln_eta.extend(c.eta_cat.iter().map(|p| p.ln()));
            t.m.push(c.m);
            t.tau2.push(c.tau2);
            t.ln_tau2.push(c.tau2.ln());
        }
        t
    }

    #[inline]
    pub fn ln_xi(&self, h: usize, r: usize) -> f64 {
        self.ln_xi[h * (self.k + 1) + r - 1]
    }

    /// ln π_h + ln p(x, z; η_h) for every component.
    pub fn covariate_log_weights(&self, x: &Covariates, z: u8, out: &mut Vec<f64>) {
        out.clear();
        for h in 0..self.h {
            let mut lw = self.ln_pi[h] + self.ln_eta[h * self.n_levels + x.x_cat - 1] + self.ln_pz[h][usize::from(z)];
            if let Some(xc) = x.x_cont.filter(|_| self.continuous) {
                let d = xc - self.m[h];
                lw -= 0.5 * (crate::math::LN_2PI + self.ln_tau2[h] + d * d / self.tau2[h]);
            }
            out.push(lw);
        }
    }
}

fn check_cov(x: &Covariates, draw: &PosteriorDraw) -> Result<()> {
    if x.x_cat == 0 || x.x_cat > draw.layout.n_levels {
        return Err(Error::Domain(format!("level {} out of range", x.x_cat)));
    }
    Ok(())
}

fn finish_weights(mut lw: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    crate::math::normalize_log_weights(&mut lw)
        .ok_or_else(|| Error::Degenerate(format!("impossible profile: every {what} weight is zero")))?;
    Ok(lw)
}

/// w_j(r, x, z) ∝ π_j p(x, z; η_j) p(r; ξ_j).
pub fn conditional_outcome_weights(r: usize, x: &Covariates, z: u8, draw: &PosteriorDraw) -> Result<Vec<f64>> {
    check_cov(x, draw)?;
    let tables = DrawTables::new(draw);
    if r == 0 || r > tables.k + 1 {
        return Err(Error::Domain(format!("attempt {r} outside 1..={}", tables.k + 1)));
    }
    let mut lw = Vec::new();
    tables.covariate_log_weights(x, z, &mut lw);
    for (h, w) in lw.iter_mut().enumerate() {
        *w += tables.ln_xi(h, r);
    }
    finish_weights(lw, "conditional-outcome")
}

/// v_m(x, z) ∝ π_m p(x, z; η_m).
pub fn covariate_mixture_weights(x: &Covariates, z: u8, draw: &PosteriorDraw) -> Result<Vec<f64>> {
    check_cov(x, draw)?;
    let tables = DrawTables::new(draw);
    let mut lw = Vec::new();
    tables.covariate_log_weights(x, z, &mut lw);
    finish_weights(lw, "covariate-mixture")
}

/// u_h(z, r) ∝ π_h p(z; η_zh) p(r; ξ_h).
pub fn pattern_mixture_weights(z: u8, r: usize, draw: &PosteriorDraw) -> Result<Vec<f64>> {
    let tables = DrawTables::new(draw);
    if r == 0 || r > tables.k + 1 {
        return Err(Error::Domain(format!("attempt {r} outside 1..={}", tables.k + 1)));
    }
    let lw = (0..tables.h)
        .map(|h| tables.ln_pi[h] + tables.ln_pz[h][usize::from(z)] + tables.ln_xi(h, r))
        .collect();
    finish_weights(lw, "pattern-mixture")
}

/// Moves every record with a missing outcome into the non-response pattern.
pub fn normalize_attempts(mut dataset: Dataset) -> Dataset {
    let k = dataset.k;
    for rec in dataset.records.iter_mut() {
        if rec.y.is_none() {
            rec.r = k + 1;
        }
    }
    dataset
}

/// Center and scale of the observed values of a column so that the
/// transformed column has mean 0 and (population) variance 0.5.
fn column_stats(values: &[f64], name: &str) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!("{name}: need at least two observed values")));
    }
    let center = crate::math::mean(values);
    let var = crate::math::variance(values, 0);
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!("{name}: zero variance")));
    }
    Ok((center, (var / STANDARDIZED_VARIANCE).sqrt()))
}

/// Standardizes observed outcomes and observed continuous covariates. When
/// no record carries the continuous covariate, its transform is the identity.
pub fn standardize(mut dataset: Dataset) -> Result<(Dataset, StandardizationRecord)> {
    let ys: Vec<f64> = dataset.records.iter().filter_map(|r| r.y).collect();
    let xs: Vec<f64> = dataset.records.iter().filter_map(|r| r.x_cont).collect();
    let (y_center, y_scale) = column_stats(&ys, "outcome")?;
    let (x_center, x_scale) = if xs.is_empty() {
        (0.0, 1.0)
    } else {
        column_stats(&xs, "continuous covariate")?
    };
    let rec = StandardizationRecord {
        y_center,
        y_scale,
        x_center,
        x_scale,
    };
    for r in dataset.records.iter_mut() {
        r.y = r.y.map(|y| rec.y_forward(y));
        r.x_cont = r.x_cont.map(|x| rec.x_forward(x));
    }
    Ok((dataset, rec))
}

/// Observed-data log likelihood Σ_i log Σ_h π_h k_h(record_i).
pub fn log_likelihood(dataset: &Dataset, draw: &PosteriorDraw, cfg: &ModelConfig) -> Result<f64> {
    let mut buf = vec![0.0; draw.h()];
    let mut total = 0.0;
    for rec in &dataset.records {
        for (h, c) in draw.clusters.iter().enumerate() {
            buf[h] = draw.sticks.pi[h].ln() + cluster_log_kernel(rec, c, cfg, &draw.layout)?;
        }
        total += log_sum_exp(&buf);
    }
    Ok(total)
}
