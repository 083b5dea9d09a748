//! Blocked Gibbs sampler for the truncated stick-breaking mixture.
//!
//! One sweep updates, in order: component assignments, stick fractions,
//! component parameters (conjugate), hierarchical hyperparameters, and the
//! missing continuous covariates. Gamma laws are shape/rate throughout; the
//! shifted shape parameters (S₁ − 2 and friends) have no conjugate update and
//! are slice-sampled on the log scale.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, dirichlet, gamma_rate, inv_gamma, inv_gamma_ln_pdf, normal, std_normal};
use crate::model::{
    ClusterParams, CovariateLayout, Dataset, ModelConfig, PosteriorDraw, StandardizationRecord, StickWeights,
};
use crate::slice::slice_sample;

/// Prior variance of the intercept means μ_α and of μ_m.
pub const MEAN_PRIOR_VAR: f64 = 0.5;
/// Shape and rate of the Gamma prior on the DP mass.
pub const MASS_PRIOR: (f64, f64) = (1.0, 1.0);
/// Initial slice width on the log(S − 2) scale.
const SLICE_WIDTH: f64 = 1.0;

/// Data-derived constants that scale the default priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    /// Variance of the observed outcome.
    pub g_y: f64,
    /// Variance of the observed continuous covariate.
    pub g_x2: f64,
    /// Outcome variance among completers of each arm.
    pub g_z: [f64; 2],
    /// OLS coefficients of the covariates and their estimated variances.
    pub mu_beta: Vec<f64>,
    pub var_beta: Vec<f64>,
    /// Inflation factor for the coefficient prior variance.
    pub c: f64,
    /// Residual degrees of freedom of the OLS fit.
    pub df: usize,
}

/// ⌈df / 5⌉.
pub fn beta_prior_inflation(df: usize) -> f64 {
    df.div_ceil(5) as f64
}

/// Hierarchical hyperparameters plus the fixed empirical constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    /// Intercept prior means, row-major over (z, r*).
    pub mu_alpha: Vec<f64>,
    pub sigma2_alpha: [f64; 2],
    pub mu_m: f64,
    pub sigma2_m: f64,
    pub s1: f64,
    pub w1: f64,
    pub s2: f64,
    pub w2: f64,
    pub s_z: [f64; 2],
    pub lambda_z: [f64; 2],
    pub s_x: f64,
    pub lambda_x: f64,
    /// DP concentration.
    pub mass: f64,
    pub constants: EmpiricalConstants,
}

impl HyperState {
    /// A fixed, valid hyperparameter block (used for hand-built draws).
    pub fn placeholder(k_cond: usize, n_cov: usize) -> Self {
        HyperState {
            mu_alpha: vec![0.0; 2 * k_cond],
            sigma2_alpha: [0.5, 0.5],
            mu_m: 0.0,
            sigma2_m: 0.5,
            s1: 3.0,
            w1: 0.25,
            s2: 3.0,
            w2: 0.25,
            s_z: [3.0, 3.0],
            lambda_z: [1.0, 1.0],
            s_x: 3.0,
            lambda_x: 1.0,
            mass: 1.0,
            constants: EmpiricalConstants {
                g_y: 0.5,
                g_x2: 0.5,
                g_z: [0.5, 0.5],
                mu_beta: vec![0.0; n_cov],
                var_beta: vec![1.0; n_cov],
                c: 1.0,
                df: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = [self.s1, self.s2, self.s_z[0], self.s_z[1], self.s_x];
        if shapes.iter().any(|&s| !(s > 2.0) || !s.is_finite()) {
            return Err(Error::Contract(format!("shape parameters must exceed 2: {shapes:?}")));
        }
        let positive = [
            self.w1,
            self.w2,
            self.lambda_z[0],
            self.lambda_z[1],
            self.lambda_x,
            self.mass,
            self.sigma2_alpha[0],
            self.sigma2_alpha[1],
            self.sigma2_m,
        ];
        if positive.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Contract(format!(
                "hyperparameters must be positive: {positive:?}"
            )));
        }
        Ok(())
    }
}

/// Sampler state. Assignments are 0-based component indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub assignments: Vec<usize>,
    pub sticks: StickWeights,
    pub clusters: Vec<ClusterParams>,
    pub hypers: HyperState,
    /// (record index, imputed standardized value) for every record whose
    /// continuous covariate is missing.
    pub imputed_x: Vec<(usize, f64)>,
}

impl GibbsState {
    pub fn to_draw(&self, standardization: StandardizationRecord, layout: CovariateLayout) -> PosteriorDraw {
        PosteriorDraw {
            sticks: self.sticks.clone(),
            clusters: self.clusters.clone(),
            hypers: self.hypers.clone(),
            standardization,
            layout,
        }
    }

    pub fn counts(&self, h: usize) -> Vec<usize> {
        let mut n = vec![0; h];
        for &a in &self.assignments {
            n[a] += 1;
        }
        n
    }
}

/// Column view of a normalized, standardized dataset.
#[derive(Debug, Clone)]
pub struct ChainData {
    pub y: Vec<Option<f64>>,
    pub r: Vec<usize>,
    pub r_star: Vec<usize>,
    pub z: Vec<u8>,
    pub x_cat: Vec<usize>,
    pub x_cont: Vec<Option<f64>>,
    pub layout: CovariateLayout,
    pub k: usize,
    pub k_cond: usize,
}

impl ChainData {
    pub fn new(dataset: &Dataset, cfg: &ModelConfig) -> Result<Self> {
        Self::with_layout(dataset, cfg, dataset.layout())
    }

    pub fn with_layout(dataset: &Dataset, cfg: &ModelConfig, layout: CovariateLayout) -> Result<Self> {
        cfg.validate()?;
        dataset.validate()?;
        if dataset.k != cfg.k {
            return Err(Error::Config(format!(
                "dataset has K={} but model has K={}",
                dataset.k, cfg.k
            )));
        }
        let recs = &dataset.records;
        if let Some(i) = recs.iter().position(|r| r.y.is_some() == (r.r == cfg.k + 1)) {
            return Err(Error::Contract(format!(
                "record {i} is not normalized: outcome presence must match r <= K"
            )));
        }
        Ok(ChainData {
            y: recs.iter().map(|r| r.y).collect(),
            r: recs.iter().map(|r| r.r).collect(),
            r_star: recs.iter().map(|r| cfg.merge.get(r.r)).collect(),
            z: recs.iter().map(|r| r.z).collect(),
            x_cat: recs.iter().map(|r| r.x_cat).collect(),
            x_cont: recs.iter().map(|r| r.x_cont).collect(),
            layout,
            k: cfg.k,
            k_cond: cfg.k_cond,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Continuous covariate with imputed values filled in (0 when the layout
    /// has no continuous covariate).
    fn filled_x(&self, imputed: &[(usize, f64)]) -> Vec<f64> {
        let mut xs: Vec<f64> = self.x_cont.iter().map(|x| x.unwrap_or(0.0)).collect();
        for &(i, v) in imputed {
            xs[i] = v;
        }
        xs
    }
}

/// G_Y, G_X₂, g_z and the OLS-based coefficient prior, all on the
/// standardized scale. The regression uses complete cases (outcome and
/// covariates observed) with one intercept per observed (z, r*) cell.
pub fn empirical_hyperconstants(dataset: &Dataset, cfg: &ModelConfig) -> Result<EmpiricalConstants> {
    let layout = dataset.layout();
    let ys: Vec<f64> = dataset.records.iter().filter_map(|r| r.y).collect();
    if ys.len() < 2 {
        return Err(Error::Degenerate("need at least two observed outcomes".into()));
    }
    let g_y = math::variance(&ys, 0);
    let xs: Vec<f64> = dataset.records.iter().filter_map(|r| r.x_cont).collect();
    let g_x2 = if xs.len() >= 2 { math::variance(&xs, 0) } else { 0.5 };

    let mut g_z = [0.0; 2];
    for z in 0..2u8 {
        let yz: Vec<f64> = dataset
            .records
            .iter()
            .filter(|r| r.z == z)
            .filter_map(|r| r.y)
            .collect();
        if yz.len() < 2 {
            return Err(Error::Degenerate(format!("arm {z}: fewer than two completers")));
        }
        g_z[usize::from(z)] = math::variance(&yz, 0);
        if !(g_z[usize::from(z)] > 0.0) {
            return Err(Error::Degenerate(format!(
                "arm {z}: outcome is constant among completers"
            )));
        }
    }

    let complete: Vec<_> = dataset
        .records
        .iter()
        .filter(|r| r.y.is_some() && (!layout.continuous || r.x_cont.is_some()))
        .collect();
    let mut cells: Vec<(u8, usize)> = complete.iter().map(|r| (r.z, cfg.merge.get(r.r))).collect();
    cells.sort_unstable();
    cells.dedup();
    let n_cov = layout.n_covariates();
    let p = cells.len() + n_cov;
    if complete.len() <= p {
        return Err(Error::Degenerate(format!(
            "{} complete cases cannot fit {p} regression parameters",
            complete.len()
        )));
    }
    let mut x = DMatrix::<f64>::zeros(complete.len(), p);
    let mut yv = DVector::<f64>::zeros(complete.len());
    let mut row = Vec::new();
    for (i, r) in complete.iter().enumerate() {
        let cell = cells.binary_search(&(r.z, cfg.merge.get(r.r))).unwrap();
        x[(i, cell)] = 1.0;
        layout.design_row(r.x_cat, r.x_cont.unwrap_or(0.0), &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, cells.len() + j)] = *v;
        }
        yv[i] = r.y.unwrap();
    }
    let xtx = x.transpose() * &x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariate design is rank deficient".into()))?;
    let coef = chol.solve(&(x.transpose() * &yv));
    let resid = &yv - &x * &coef;
    let df = complete.len() - p;
    let s2 = resid.norm_squared() / df as f64;
    let inv = chol.inverse();
    let mu_beta: Vec<f64> = (0..n_cov).map(|j| coef[cells.len() + j]).collect();
    let var_beta: Vec<f64> = (0..n_cov)
        .map(|j| s2 * inv[(cells.len() + j, cells.len() + j)])
        .collect();
    if var_beta.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Singular("coefficient variances are not positive".into()));
    }
    Ok(EmpiricalConstants {
        g_y,
        g_x2,
        g_z,
        mu_beta,
        var_beta,
        c: beta_prior_inflation(df),
        df,
    })
}

fn shifted_shape<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 + inv_gamma(1.0, 1.0, rng)
}

/// Draws the hyperparameters from their priors.
pub fn sample_hyper_prior<R: Rng + ?Sized>(consts: &EmpiricalConstants, k_cond: usize, rng: &mut R) -> HyperState {
    let s1 = shifted_shape(rng);
    let s2 = shifted_shape(rng);
    let s_z = [shifted_shape(rng), shifted_shape(rng)];
    let s_x = shifted_shape(rng);
    let lambda_z = [gamma_rate(1.0, 1.0, rng), gamma_rate(1.0, 1.0, rng)];
    let lambda_x = gamma_rate(1.0, 1.0, rng);
    let sigma2_alpha = [
        inv_gamma(s_z[0], s_z[0] * lambda_z[0] * consts.g_z[0], rng),
        inv_gamma(s_z[1], s_z[1] * lambda_z[1] * consts.g_z[1], rng),
    ];
    HyperState {
        mu_alpha: (0..2 * k_cond).map(|_| normal(0.0, MEAN_PRIOR_VAR, rng)).collect(),
        sigma2_alpha,
        mu_m: normal(0.0, MEAN_PRIOR_VAR, rng),
        sigma2_m: inv_gamma(s_x, s_x * lambda_x * consts.g_x2, rng),
        s1,
        w1: gamma_rate(1.0, 2.0 / consts.g_y, rng),
        s2,
        w2: gamma_rate(1.0, 2.0 / consts.g_x2, rng),
        s_z,
        lambda_z,
        s_x,
        lambda_x,
        mass: gamma_rate(MASS_PRIOR.0, MASS_PRIOR.1, rng),
        constants: consts.clone(),
    }
}

/// Draws one component's parameters from the base measure.
pub fn sample_base_measure<R: Rng + ?Sized>(
    hypers: &HyperState,
    k: usize,
    k_cond: usize,
    layout: &CovariateLayout,
    rng: &mut R,
) -> ClusterParams {
    let consts = &hypers.constants;
    ClusterParams {
        alpha: (0..2 * k_cond)
            .map(|i| normal(hypers.mu_alpha[i], hypers.sigma2_alpha[i / k_cond], rng))
            .collect(),
        beta: consts
            .mu_beta
            .iter()
            .zip(&consts.var_beta)
            .map(|(m, v)| normal(*m, consts.c * v, rng))
            .collect(),
        sigma2: inv_gamma(hypers.s1, hypers.s1 * hypers.w1, rng),
        xi: dirichlet(&vec![1.0 / (k + 1) as f64; k + 1], rng),
        eta_cat: dirichlet(&vec![1.0 / layout.n_levels as f64; layout.n_levels], rng),
        m: normal(hypers.mu_m, hypers.sigma2_m, rng),
        tau2: inv_gamma(hypers.s2, hypers.s2 * hypers.w2, rng),
        p_z: beta_open(1.0, 1.0, rng),
    }
}

/// Beta draw kept strictly inside (0, 1).
fn beta_open<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    math::beta(a, b, rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn sticks_from_counts<R: Rng + ?Sized>(counts: &[usize], mass: f64, rng: &mut R) -> StickWeights {
    let h = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut v = Vec::with_capacity(h);
    for &n in &counts[..h - 1] {
        tail -= n;
        let draw = math::beta(1.0 + n as f64, mass + tail as f64, rng);
        // Keep ln(1 - v) finite for the mass update.
        v.push(draw.min(1.0 - f64::EPSILON));
    }
    v.push(1.0);
    StickWeights::from_fractions(v).expect("stick fractions are in [0, 1] with final 1")
}

/// Initial state: uniform assignments, prior sticks, base-measure components
/// and prior hyperparameters. `hypers` overrides the hyperparameter prior draw.
pub fn init_state<R: Rng + ?Sized>(
    data: &ChainData,
    cfg: &ModelConfig,
    consts: &EmpiricalConstants,
    hypers: Option<HyperState>,
    rng: &mut R,
) -> Result<GibbsState> {
    cfg.validate()?;
    if consts.mu_beta.len() != data.layout.n_covariates() {
        return Err(Error::Contract(format!(
            "{} coefficient prior means for {} covariates",
            consts.mu_beta.len(),
            data.layout.n_covariates()
        )));
    }
    let mut seen: Vec<usize> = data.r_star.clone();
    seen.sort_unstable();
    seen.dedup();
    if !data.is_empty() && seen.len() < cfg.k_cond + 1 {
        warn!(
            "only {} of {} attempt levels observed; empty levels are identified by the prior alone",
            seen.len(),
            cfg.k_cond + 1
        );
    }
    let hypers = match hypers {
        Some(h) => {
            h.validate()?;
            h
        }
        None => sample_hyper_prior(consts, cfg.k_cond, rng),
    };
    let h = cfg.h;
    let assignments: Vec<usize> = (0..data.len()).map(|_| rng.random_range(0..h)).collect();
    let sticks = sticks_from_counts(&vec![0; h], hypers.mass, rng);
    let clusters: Vec<ClusterParams> = (0..h)
        .map(|_| sample_base_measure(&hypers, cfg.k, cfg.k_cond, &data.layout, rng))
        .collect();
    let imputed_x = if data.layout.continuous {
        data.x_cont
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_none())
            .map(|(i, _)| {
                let c = &clusters[assignments[i]];
                (i, normal(c.m, c.tau2, rng))
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(GibbsState {
        assignments,
        sticks,
        clusters,
        hypers,
        imputed_x,
    })
}

/// Per-component log tables for the assignment step.
struct KernelTables {
    ln_pi: Vec<f64>,
    ln_xi: Vec<f64>,
    ln_eta: Vec<f64>,
    ln_pz: Vec<[f64; 2]>,
    ln_sigma2: Vec<f64>,
    inv_sigma2: Vec<f64>,
    ln_tau2: Vec<f64>,
    inv_tau2: Vec<f64>,
}

impl KernelTables {
    fn new(state: &GibbsState) -> Self {
        let cs = &state.clusters;
        KernelTables {
            ln_pi: state.sticks.pi.iter().map(|p| p.ln()).collect(),
            ln_xi: cs.iter().flat_map(|c| c.xi.iter().map(|p| p.ln())).collect(),
            ln_eta: cs.iter().flat_map(|c| c.eta_cat.iter().map(|p| p.ln())).collect(),
            ln_pz: cs.iter().map(|c| [(1.0 - c.p_z).ln(), c.p_z.ln()]).collect(),
            ln_sigma2: cs.iter().map(|c| c.sigma2.ln()).collect(),
            inv_sigma2: cs.iter().map(|c| 1.0 / c.sigma2).collect(),
            ln_tau2: cs.iter().map(|c| c.tau2.ln()).collect(),
            inv_tau2: cs.iter().map(|c| 1.0 / c.tau2).collect(),
        }
    }
}

/// Redraws every assignment from p(h) ∝ π_h · kernel_h(record), using the
/// imputed continuous covariate where the observed one is missing.
pub fn sample_assignments<R: Rng + ?Sized>(state: &mut GibbsState, data: &ChainData, rng: &mut R) -> Result<()> {
    let h = state.clusters.len();
    let t = KernelTables::new(state);
    let xs = data.filled_x(&state.imputed_x);
    let (k1, n_levels, k_cond) = (data.k + 1, data.layout.n_levels, data.k_cond);
    let mut lw = vec![0.0; h];
    let mut scratch = Vec::with_capacity(h);
    for (i, &x) in xs.iter().enumerate() {
        let (r, z, xc) = (data.r[i], data.z[i], data.x_cat[i]);
        let zi = usize::from(z);
        for (j, c) in state.clusters.iter().enumerate() {
            let mut lp = t.ln_pi[j] + t.ln_xi[j * k1 + r - 1] + t.ln_eta[j * n_levels + xc - 1] + t.ln_pz[j][zi];
            if data.layout.continuous {
                let d = x - c.m;
                lp -= 0.5 * (t.ln_tau2[j] + d * d * t.inv_tau2[j]);
            }
            if let Some(y) = data.y[i] {
                let mean = c.alpha[zi * k_cond + data.r_star[i] - 1] + data.layout.linear_predictor(&c.beta, xc, x);
                let d = y - mean;
                lp -= 0.5 * (t.ln_sigma2[j] + d * d * t.inv_sigma2[j]);
            }
            lw[j] = lp;
        }
        state.assignments[i] = math::sample_log_categorical(&lw, &mut scratch, rng)
            .ok_or_else(|| Error::Numeric(format!("record {i} has zero likelihood under every component")))?;
    }
    Ok(())
}

/// v_h ~ Beta(1 + n_h, mass + Σ_{l>h} n_l) for h < H, v_H = 1.
pub fn sample_sticks<R: Rng + ?Sized>(state: &mut GibbsState, rng: &mut R) {
    let counts = state.counts(state.clusters.len());
    state.sticks = sticks_from_counts(&counts, state.hypers.mass, rng);
}

/// Conjugate update of every component's parameter block given its members.
/// Components without members draw from the base measure.
pub fn sample_cluster_params<R: Rng + ?Sized>(state: &mut GibbsState, data: &ChainData, rng: &mut R) -> Result<()> {
    let h = state.clusters.len();
    let (k, k_cond, layout) = (data.k, data.k_cond, data.layout);
    let xs = data.filled_x(&state.imputed_x);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); h];
    for (i, &a) in state.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let hy = &state.hypers;
    let consts = &hy.constants;
    let n_cov = layout.n_covariates();
    let mut row = Vec::with_capacity(n_cov);
    for (j, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            state.clusters[j] = sample_base_measure(hy, k, k_cond, &layout, rng);
            continue;
        }
        let c = &mut state.clusters[j];
        let observed: Vec<usize> = idx.iter().copied().filter(|&i| data.y[i].is_some()).collect();

        // Intercepts given β, σ².
        let mut sum = vec![0.0; 2 * k_cond];
        let mut cnt = vec![0usize; 2 * k_cond];
        for &i in &observed {
            let cell = usize::from(data.z[i]) * k_cond + data.r_star[i] - 1;
            sum[cell] += data.y[i].unwrap() - layout.linear_predictor(&c.beta, data.x_cat[i], xs[i]);
            cnt[cell] += 1;
        }
        for cell in 0..2 * k_cond {
            let prior_var = hy.sigma2_alpha[cell / k_cond];
            let prec = 1.0 / prior_var + cnt[cell] as f64 / c.sigma2;
            let mean = (hy.mu_alpha[cell] / prior_var + sum[cell] / c.sigma2) / prec;
            c.alpha[cell] = normal(mean, 1.0 / prec, rng);
        }

        // Coefficients given intercepts, σ².
        if n_cov > 0 {
            let mut prec = DMatrix::<f64>::zeros(n_cov, n_cov);
            let mut rhs = DVector::<f64>::zeros(n_cov);
            for q in 0..n_cov {
                let v = consts.c * consts.var_beta[q];
                prec[(q, q)] = 1.0 / v;
                rhs[q] = consts.mu_beta[q] / v;
            }
            for &i in &observed {
                layout.design_row(data.x_cat[i], xs[i], &mut row);
                let e = data.y[i].unwrap() - c.alpha_at(data.z[i], data.r_star[i], k_cond);
                for a in 0..n_cov {
                    rhs[a] += row[a] * e / c.sigma2;
                    for b in 0..n_cov {
                        prec[(a, b)] += row[a] * row[b] / c.sigma2;
                    }
                }
            }
            let chol = prec
                .cholesky()
                .ok_or_else(|| Error::Numeric("coefficient posterior precision not positive definite".into()))?;
            let mean = chol.solve(&rhs);
            let eps = DVector::from_iterator(n_cov, (0..n_cov).map(|_| std_normal(rng)));
            let dev = chol
                .l()
                .transpose()
                .solve_upper_triangular(&eps)
                .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
            for q in 0..n_cov {
                c.beta[q] = mean[q] + dev[q];
            }
        }

        // Outcome variance.
        let mut ss = 0.0;
        for &i in &observed {
            let d = data.y[i].unwrap()
                - c.alpha_at(data.z[i], data.r_star[i], k_cond)
                - layout.linear_predictor(&c.beta, data.x_cat[i], xs[i]);
            ss += d * d;
        }
        c.sigma2 = inv_gamma(hy.s1 + 0.5 * observed.len() as f64, hy.s1 * hy.w1 + 0.5 * ss, rng);

        // Attempt and level simplexes.
        let mut xi_post = vec![1.0 / (k + 1) as f64; k + 1];
        let mut eta_post = vec![1.0 / layout.n_levels as f64; layout.n_levels];
        let mut n1 = 0usize;
        for &i in idx {
            xi_post[data.r[i] - 1] += 1.0;
            eta_post[data.x_cat[i] - 1] += 1.0;
            n1 += usize::from(data.z[i]);
        }
        c.xi = dirichlet(&xi_post, rng);
        c.eta_cat = dirichlet(&eta_post, rng);
        c.p_z = beta_open(1.0 + n1 as f64, 1.0 + (idx.len() - n1) as f64, rng);

        // Continuous covariate law.
        if layout.continuous {
            let n = idx.len() as f64;
            let sx: f64 = idx.iter().map(|&i| xs[i]).sum();
            let prec = 1.0 / hy.sigma2_m + n / c.tau2;
            c.m = normal((hy.mu_m / hy.sigma2_m + sx / c.tau2) / prec, 1.0 / prec, rng);
            let ssx: f64 = idx.iter().map(|&i| (xs[i] - c.m).powi(2)).sum();
            c.tau2 = inv_gamma(hy.s2 + 0.5 * n, hy.s2 * hy.w2 + 0.5 * ssx, rng);
        } else {
            c.m = normal(hy.mu_m, hy.sigma2_m, rng);
            c.tau2 = inv_gamma(hy.s2, hy.s2 * hy.w2, rng);
        }
    }
    Ok(())
}

/// Log density of S given a shifted IG(1, 1) prior on S − 2 and iid
/// IG(S, S·scale) observations summarized by n, Σ ln x and Σ 1/x.
fn shape_log_post(u: f64, scale: f64, n: f64, sum_ln: f64, sum_inv: f64) -> f64 {
    let t = u.exp();
    let s = 2.0 + t;
    if !t.is_finite() || t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let prior = inv_gamma_ln_pdf(t, 1.0, 1.0) + u;
    let lik =
        n * (s * (s * scale).ln() - statrs::function::gamma::ln_gamma(s)) - (s + 1.0) * sum_ln - s * scale * sum_inv;
    prior + lik
}

fn update_shape<R: Rng + ?Sized>(current: f64, scale: f64, obs: &[f64], rng: &mut R) -> Result<f64> {
    let n = obs.len() as f64;
    let sum_ln: f64 = obs.iter().map(|x| x.ln()).sum();
    let sum_inv: f64 = obs.iter().map(|x| 1.0 / x).sum();
    let u0 = (current - 2.0).ln();
    let u = slice_sample(u0, |u| shape_log_post(u, scale, n, sum_ln, sum_inv), SLICE_WIDTH, rng)?;
    Ok(2.0 + u.exp())
}

/// Hierarchical hyperparameter updates given the component parameters.
pub fn sample_hypers<R: Rng + ?Sized>(state: &mut GibbsState, data: &ChainData, rng: &mut R) -> Result<()> {
    let k_cond = data.k_cond;
    let h = state.clusters.len() as f64;
    let cs = &state.clusters;
    let hy = &mut state.hypers;
    let consts = hy.constants.clone();

    for z in 0..2 {
        // Intercept means, one per (z, r*) cell.
        for r in 0..k_cond {
            let cell = z * k_cond + r;
            let s: f64 = cs.iter().map(|c| c.alpha[cell]).sum();
            let prec = 1.0 / MEAN_PRIOR_VAR + h / hy.sigma2_alpha[z];
            hy.mu_alpha[cell] = normal((s / hy.sigma2_alpha[z]) / prec, 1.0 / prec, rng);
        }
        let ss: f64 = cs
            .iter()
            .flat_map(|c| (0..k_cond).map(move |r| (z, r, c)))
            .map(|(z, r, c)| (c.alpha[z * k_cond + r] - hy.mu_alpha[z * k_cond + r]).powi(2))
            .sum();
        hy.sigma2_alpha[z] = inv_gamma(
            hy.s_z[z] + 0.5 * h * k_cond as f64,
            hy.s_z[z] * hy.lambda_z[z] * consts.g_z[z] + 0.5 * ss,
            rng,
        );
        hy.lambda_z[z] = gamma_rate(
            1.0 + hy.s_z[z],
            1.0 + hy.s_z[z] * consts.g_z[z] / hy.sigma2_alpha[z],
            rng,
        );
        hy.s_z[z] = update_shape(hy.s_z[z], hy.lambda_z[z] * consts.g_z[z], &[hy.sigma2_alpha[z]], rng)?;
    }

    let sm: f64 = cs.iter().map(|c| c.m).sum();
    let prec = 1.0 / MEAN_PRIOR_VAR + h / hy.sigma2_m;
    hy.mu_m = normal((sm / hy.sigma2_m) / prec, 1.0 / prec, rng);
    let ssm: f64 = cs.iter().map(|c| (c.m - hy.mu_m).powi(2)).sum();
    hy.sigma2_m = inv_gamma(hy.s_x + 0.5 * h, hy.s_x * hy.lambda_x * consts.g_x2 + 0.5 * ssm, rng);
    hy.lambda_x = gamma_rate(1.0 + hy.s_x, 1.0 + hy.s_x * consts.g_x2 / hy.sigma2_m, rng);
    hy.s_x = update_shape(hy.s_x, hy.lambda_x * consts.g_x2, &[hy.sigma2_m], rng)?;

    let sigma2: Vec<f64> = cs.iter().map(|c| c.sigma2).collect();
    let inv_sum: f64 = sigma2.iter().map(|s| 1.0 / s).sum();
    hy.w1 = gamma_rate(1.0 + h * hy.s1, 2.0 / consts.g_y + hy.s1 * inv_sum, rng);
    hy.s1 = update_shape(hy.s1, hy.w1, &sigma2, rng)?;

    let tau2: Vec<f64> = cs.iter().map(|c| c.tau2).collect();
    let inv_sum: f64 = tau2.iter().map(|s| 1.0 / s).sum();
    hy.w2 = gamma_rate(1.0 + h * hy.s2, 2.0 / consts.g_x2 + hy.s2 * inv_sum, rng);
    hy.s2 = update_shape(hy.s2, hy.w2, &tau2, rng)?;

    hy.mass = sample_mass(&state.sticks, rng);
    Ok(())
}

/// Mass | sticks ~ Gamma(a₀ + H − 1, b₀ − Σ_{h<H} ln(1 − v_h)).
pub fn sample_mass<R: Rng + ?Sized>(sticks: &StickWeights, rng: &mut R) -> f64 {
    let (shape, rate) = mass_posterior(sticks);
    gamma_rate(shape, rate, rng).max(f64::MIN_POSITIVE)
}

/// Shape and rate of the conditional posterior of the DP mass.
pub fn mass_posterior(sticks: &StickWeights) -> (f64, f64) {
    let h = sticks.len();
    let log_tail: f64 = sticks.v[..h - 1].iter().map(|v| (-v).ln_1p()).sum();
    (MASS_PRIOR.0 + (h - 1) as f64, MASS_PRIOR.1 - log_tail)
}

/// Draws each missing continuous covariate from its full conditional given
/// the record's component and, when observed, its outcome.
pub fn impute_missing_covariates<R: Rng + ?Sized>(state: &mut GibbsState, data: &ChainData, rng: &mut R) {
    let Some(ci) = data.layout.cont_index() else {
        return;
    };
    let k_cond = data.k_cond;
    for slot in state.imputed_x.iter_mut() {
        let i = slot.0;
        let c = &state.clusters[state.assignments[i]];
        slot.1 = match data.y[i] {
            Some(y) => {
                let bx = c.beta[ci];
                // Outcome residual after everything except the imputed term.
                let partial = y
                    - c.alpha_at(data.z[i], data.r_star[i], k_cond)
                    - data.layout.linear_predictor(&c.beta, data.x_cat[i], 0.0);
                let (mean, var) = imputation_conditional(c.m, c.tau2, bx, c.sigma2, partial);
                normal(mean, var, rng)
            }
            None => normal(c.m, c.tau2, rng),
        };
    }
}

/// Mean and variance of x given x ~ N(m, τ²) and residual ~ N(β_x·x, σ²).
pub fn imputation_conditional(m: f64, tau2: f64, beta_x: f64, sigma2: f64, residual: f64) -> (f64, f64) {
    let prec = 1.0 / tau2 + beta_x * beta_x / sigma2;
    ((m / tau2 + beta_x * residual / sigma2) / prec, 1.0 / prec)
}

#[derive(Debug, Clone, Default)]
pub struct SamplerOptions {
    /// Start from these hyperparameters instead of a prior draw.
    pub initial_hypers: Option<HyperState>,
    /// Hold the hyperparameters fixed at their initial values.
    pub freeze_hypers: bool,
}

/// One full sweep in the fixed scan order.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &ChainData,
    freeze_hypers: bool,
    rng: &mut R,
) -> Result<()> {
    sample_assignments(state, data, rng)?;
    sample_sticks(state, rng);
    sample_cluster_params(state, data, rng)?;
    if !freeze_hypers {
        sample_hypers(state, data, rng)?;
    }
    impute_missing_covariates(state, data, rng);
    Ok(())
}

/// Runs `n_iter` sweeps and keeps every `thin`-th state after burn-in.
pub fn run_chain<R: Rng + ?Sized>(
    data: &ChainData,
    cfg: &ModelConfig,
    consts: &EmpiricalConstants,
    standardization: StandardizationRecord,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<Vec<PosteriorDraw>> {
    let mut state = init_state(data, cfg, consts, opts.initial_hypers.clone(), rng)?;
    let mut draws = Vec::with_capacity(cfg.n_retained());
    for it in 1..=cfg.n_iter {
        sweep(&mut state, data, opts.freeze_hypers, rng)?;
        if it > cfg.n_burn && (it - cfg.n_burn).is_multiple_of(cfg.thin) {
            draws.push(state.to_draw(standardization, data.layout));
        }
    }
    Ok(draws)
}

/// Result of fitting a raw dataset.
#[derive(Debug, Clone)]
pub struct Fit {
    pub draws: Vec<PosteriorDraw>,
    pub standardization: StandardizationRecord,
    pub constants: EmpiricalConstants,
}

/// Normalizes attempts, standardizes, derives the empirical constants and
/// runs the chain.
pub fn fit<R: Rng + ?Sized>(raw: Dataset, cfg: &ModelConfig, rng: &mut R) -> Result<Fit> {
    let ds = crate::model::normalize_attempts(raw);
    let (ds, standardization) = crate::model::standardize(ds)?;
    let constants = empirical_hyperconstants(&ds, cfg)?;
    let data = ChainData::new(&ds, cfg)?;
    let draws = run_chain(&data, cfg, &constants, standardization, &SamplerOptions::default(), rng)?;
    Ok(Fit {
        draws,
        standardization,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttemptRecord, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| {
                let r = 1 + i % 4;
                let y = if r <= 3 { Some(normal(0.0, 0.5, &mut rng)) } else { None };
                let x_cont = if i % 7 == 0 {
                    None
                } else {
                    Some(normal(0.0, 0.5, &mut rng))
                };
                AttemptRecord {
                    y,
                    r,
                    x_cat: 1 + (i / 4) % 2,
                    x_cont,
                    z: ((i / 8) % 2) as u8,
                }
            })
            .collect();
        Dataset {
            records,
            k: 3,
            n_levels: 2,
        }
    }

    fn cfg3() -> ModelConfig {
        ModelConfig {
            h: 3,
            ..ModelConfig::full(3)
        }
        .schedule(10, 5, 5)
    }

    #[test]
    fn init_state_shapes_and_determinism() {
        let ds = tiny_data(60, 1);
        let cfg = cfg3();
        let consts = empirical_hyperconstants(&ds, &cfg).unwrap();
        let data = ChainData::new(&ds, &cfg).unwrap();
        let a = init_state(&data, &cfg, &consts, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_state(&data, &cfg, &consts, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sticks.v.len(), 3);
        assert_eq!(a.sticks.v[2], 1.0);
        let missing: Vec<usize> = (0..60).filter(|i| i % 7 == 0).collect();
        assert_eq!(a.imputed_x.iter().map(|p| p.0).collect::<Vec<_>>(), missing);
        assert!(a.assignments.iter().all(|&h| h < 3));
        a.hypers.validate().unwrap();
    }

    #[test]
    fn empirical_variance_of_standardized_outcome() {
        let (ds, _) = crate::model::standardize(tiny_data(80, 2)).unwrap();
        let consts = empirical_hyperconstants(&ds, &cfg3()).unwrap();
        assert!((consts.g_y - 0.5).abs() < 1e-12);
        assert!((consts.g_x2 - 0.5).abs() < 1e-12);
        assert_eq!(consts.mu_beta.len(), 2);
    }

    #[test]
    fn inflation_matches_reported_degrees_of_freedom() {
        assert_eq!(beta_prior_inflation(344), 69.0);
        assert_eq!(beta_prior_inflation(5), 1.0);
        assert_eq!(beta_prior_inflation(6), 2.0);
    }

    #[test]
    fn constant_arm_is_rejected() {
        let mut ds = tiny_data(40, 3);
        for r in ds.records.iter_mut().filter(|r| r.z == 1) {
            r.y = r.y.map(|_| 1.0);
        }
        assert!(matches!(
            empirical_hyperconstants(&ds, &cfg3()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn collinear_design_is_singular() {
        // Level 2 occurs exactly in arm-1 cells: its dummy duplicates the
        // cell indicators.
        let mut ds = tiny_data(40, 4);
        for r in ds.records.iter_mut() {
            r.x_cat = 1 + usize::from(r.z);
        }
        assert!(matches!(
            empirical_hyperconstants(&ds, &cfg3()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn ols_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let records: Vec<_> = (0..n)
            .map(|_| {
                let x = normal(2.0, 0.2, &mut rng);
                let z = rng.random_range(0..2u8);
                let y = 10.0 + 1.5 * f64::from(z) + 0.4 * x + normal(0.0, 1.0, &mut rng);
                AttemptRecord {
                    y: Some(y),
                    r: 1,
                    x_cat: 1,
                    x_cont: Some(x),
                    z,
                }
            })
            .collect();
        let (ds, st) = crate::model::standardize(Dataset {
            records,
            k: 1,
            n_levels: 1,
        })
        .unwrap();
        let cfg = ModelConfig::full(1);
        let consts = empirical_hyperconstants(&ds, &cfg).unwrap();
        let truth = 0.4 * st.x_scale / st.y_scale;
        let se = consts.var_beta[0].sqrt();
        assert!(
            (consts.mu_beta[0] - truth).abs() < 3.0 * se,
            "{} vs {truth} (se {se})",
            consts.mu_beta[0]
        );
        assert_eq!(consts.df, n - 3);
    }

    fn state_with(clusters: Vec<ClusterParams>, v: Vec<f64>, n: usize, k_cond: usize) -> GibbsState {
        GibbsState {
            assignments: vec![0; n],
            sticks: StickWeights::from_fractions(v).unwrap(),
            clusters,
            hypers: HyperState::placeholder(k_cond, 0),
            imputed_x: Vec::new(),
        }
    }

    fn plain_cluster(k: usize, k_cond: usize) -> ClusterParams {
        ClusterParams {
            alpha: vec![0.0; 2 * k_cond],
            beta: vec![],
            sigma2: 1.0,
            xi: vec![1.0 / (k + 1) as f64; k + 1],
            eta_cat: vec![1.0],
            m: 0.0,
            tau2: 1.0,
            p_z: 0.5,
        }
    }

    fn one_record_data(y: f64) -> ChainData {
        let ds = Dataset {
            records: vec![AttemptRecord {
                y: Some(y),
                r: 1,
                x_cat: 1,
                x_cont: None,
                z: 0,
            }],
            k: 1,
            n_levels: 1,
        };
        ChainData::new(&ds, &ModelConfig::full(1)).unwrap()
    }

    #[test]
    fn single_component_assignments() {
        let data = one_record_data(0.3);
        let mut st = state_with(vec![plain_cluster(1, 1)], vec![1.0], 1, 1);
        sample_assignments(&mut st, &data, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(st.assignments, vec![0]);
    }

    #[test]
    fn assignment_frequency_matches_kernel_ratio() {
        let data = one_record_data(0.8);
        let mut a = plain_cluster(1, 1);
        a.alpha = vec![1.0, 1.0];
        let b = plain_cluster(1, 1);
        let mut st = state_with(vec![a, b], vec![0.4, 1.0], 1, 1);
        let ka = 0.4 * (-(0.8f64 - 1.0).powi(2) / 2.0).exp();
        let kb = 0.6 * (-(0.8f64).powi(2) / 2.0).exp();
        let p = ka / (ka + kb);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            sample_assignments(&mut st, &data, &mut rng).unwrap();
            hits += usize::from(st.assignments[0] == 0);
        }
        let f = hits as f64 / n as f64;
        assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{f} vs {p}");
    }

    #[test]
    fn identical_components_assign_by_weight() {
        let data = one_record_data(0.1);
        let mut st = state_with(vec![plain_cluster(1, 1), plain_cluster(1, 1)], vec![0.25, 1.0], 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 50_000;
        let mut hits = 0;
        for _ in 0..n {
            sample_assignments(&mut st, &data, &mut rng).unwrap();
            hits += usize::from(st.assignments[0] == 0);
        }
        let f = hits as f64 / n as f64;
        assert!((f - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn stick_conditionals() {
        // n = (5, 3, 0), mass 1: v1 ~ Beta(6, 4), v2 ~ Beta(4, 1).
        let mut st = state_with(vec![plain_cluster(1, 1); 3], vec![0.3, 0.3, 1.0], 8, 1);
        st.assignments = vec![0, 0, 0, 0, 0, 1, 1, 1];
        st.hypers.mass = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            sample_sticks(&mut st, &mut rng);
            assert_eq!(st.sticks.v[2], 1.0);
            s1 += st.sticks.v[0];
            s2 += st.sticks.v[1];
        }
        let (m1, m2) = (s1 / n as f64, s2 / n as f64);
        let sd1 = (6.0 * 4.0 / (100.0 * 11.0) / n as f64).sqrt();
        let sd2 = (4.0 / (25.0 * 6.0) / n as f64).sqrt();
        assert!((m1 - 0.6).abs() < 3.0 * sd1, "{m1}");
        assert!((m2 - 0.8).abs() < 3.0 * sd2, "{m2}");

        // No data: the prior Beta(1, mass).
        st.assignments.clear();
        st.hypers.mass = 3.0;
        let mut s = 0.0;
        for _ in 0..n {
            sample_sticks(&mut st, &mut rng);
            s += st.sticks.v[0];
        }
        let sd = (3.0 / (16.0 * 5.0) / n as f64).sqrt();
        assert!((s / n as f64 - 0.25).abs() < 3.0 * sd);
    }

    #[test]
    fn stick_mass_limit() {
        let mut st = state_with(vec![plain_cluster(1, 1); 3], vec![0.3, 0.3, 1.0], 50, 1);
        st.hypers.mass = 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = 0.0;
        for _ in 0..2000 {
            sample_sticks(&mut st, &mut rng);
            s += st.sticks.v[0];
        }
        assert!(s / 2000.0 > 0.999);
    }

    #[test]
    fn intercept_update_matches_normal_normal() {
        // n members at y = 0.7, β empty, σ² = 0.5 held fixed by a huge S₁ W₁.
        let n = 8;
        let ds = Dataset {
            records: (0..n)
                .map(|_| AttemptRecord {
                    y: Some(0.7),
                    r: 1,
                    x_cat: 1,
                    x_cont: None,
                    z: 0,
                })
                .collect(),
            k: 1,
            n_levels: 1,
        };
        let data = ChainData::new(&ds, &ModelConfig::full(1)).unwrap();
        let mut base = state_with(vec![plain_cluster(1, 1)], vec![1.0], n, 1);
        base.hypers.mu_alpha = vec![0.2, 0.0];
        base.hypers.sigma2_alpha = [0.3, 0.3];
        let sigma2 = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 100_000;
        let mut s = 0.0;
        for _ in 0..reps {
            let mut st = base.clone();
            st.clusters[0].sigma2 = sigma2;
            sample_cluster_params(&mut st, &data, &mut rng).unwrap();
            s += st.clusters[0].alpha[0];
        }
        let prec = 1.0 / 0.3 + n as f64 / sigma2;
        let mean = (0.2 / 0.3 + n as f64 * 0.7 / sigma2) / prec;
        let se = (1.0 / prec / reps as f64).sqrt();
        assert!((s / reps as f64 - mean).abs() < 3.0 * se);
    }

    #[test]
    fn attempt_simplex_update_is_dirichlet_multinomial() {
        // Counts (2, 0, ..., 0, 1) over K + 1 = 10 patterns.
        let k = 9;
        let mut records = vec![
            AttemptRecord {
                y: Some(0.1),
                r: 1,
                x_cat: 1,
                x_cont: None,
                z: 0
            };
            2
        ];
        records.push(AttemptRecord {
            y: None,
            r: 10,
            x_cat: 1,
            x_cont: None,
            z: 1,
        });
        let ds = Dataset {
            records,
            k,
            n_levels: 1,
        };
        let cfg = ModelConfig::full(k);
        let data = ChainData::new(&ds, &cfg).unwrap();
        let base = state_with(vec![plain_cluster(k, k)], vec![1.0], 3, k);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 50_000;
        let mut s = vec![0.0; k + 1];
        for _ in 0..reps {
            let mut st = base.clone();
            sample_cluster_params(&mut st, &data, &mut rng).unwrap();
            for (a, b) in s.iter_mut().zip(&st.clusters[0].xi) {
                *a += b;
            }
        }
        let a0 = 0.1;
        let alpha: Vec<f64> = (0..=k)
            .map(|i| {
                a0 + if i == 0 {
                    2.0
                } else if i == k {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = alpha.iter().sum();
        for (i, a) in alpha.iter().enumerate() {
            let p = a / total;
            let var = p * (1.0 - p) / (total + 1.0);
            let got = s[i] / reps as f64;
            assert!(
                (got - p).abs() < 3.0 * (var / reps as f64).sqrt() + 1e-9,
                "xi[{i}] {got} vs {p}"
            );
        }
    }

    #[test]
    fn w1_conditional_matches_formula() {
        // σ²_h = 1 for all h, S₁ = 3 => W₁ ~ Gamma(1 + 3H, 2/G_Y + 3H).
        let h = 4;
        let hf = h as f64;
        let mut st = state_with(vec![plain_cluster(1, 1); h], vec![0.2, 0.2, 0.2, 1.0], 0, 1);
        st.hypers.s1 = 3.0;
        let g_y = st.hypers.constants.g_y;
        let sigma2 = vec![1.0; h];
        let inv_sum: f64 = sigma2.iter().map(|s| 1.0 / s).sum();
        let (shape, rate) = (1.0 + hf * 3.0, 2.0 / g_y + 3.0 * inv_sum);
        assert_eq!((shape, rate), (1.0 + 3.0 * hf, 2.0 / g_y + 3.0 * hf));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let reps = 50_000;
        let s: f64 = (0..reps).map(|_| gamma_rate(shape, rate, &mut rng)).sum();
        let se = (shape / (rate * rate) / reps as f64).sqrt();
        assert!((s / reps as f64 - shape / rate).abs() < 3.0 * se);
        let _ = &mut st;
    }

    #[test]
    fn mass_posterior_limits() {
        let v = vec![1e-12, 1e-12, 1e-12, 1.0];
        let sticks = StickWeights::from_fractions(v).unwrap();
        let (shape, rate) = mass_posterior(&sticks);
        assert_eq!(shape, 1.0 + 3.0);
        assert!((rate - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mu_alpha_single_cluster_mean() {
        // One cluster value a with prior N(0, 0.5): mean a · 0.5 / (0.5 + σ²_α).
        let a = 1.3;
        let s2a = 0.2;
        let prec = 1.0 / MEAN_PRIOR_VAR + 1.0 / s2a;
        let mean = (a / s2a) / prec;
        assert!((mean - a * 0.5 / (0.5 + s2a)).abs() < 1e-12);
    }

    #[test]
    fn imputation_conditionals() {
        let (m, v) = imputation_conditional(0.0, 1.0, 1.0, 1.0, 2.0);
        assert!((m - 1.0).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
        let (m, v) = imputation_conditional(0.3, 0.7, 0.0, 1.0, 5.0);
        assert!((m - 0.3).abs() < 1e-12 && (v - 0.7).abs() < 1e-12);
    }

    #[test]
    fn imputation_without_outcome_uses_component_law() {
        let ds = Dataset {
            records: vec![
                AttemptRecord {
                    y: None,
                    r: 2,
                    x_cat: 1,
                    x_cont: None,
                    z: 0,
                },
                AttemptRecord {
                    y: Some(0.0),
                    r: 1,
                    x_cat: 1,
                    x_cont: Some(0.0),
                    z: 0,
                },
            ],
            k: 1,
            n_levels: 1,
        };
        let data = ChainData::new(&ds, &ModelConfig::full(1)).unwrap();
        let mut c = plain_cluster(1, 1);
        c.beta = vec![2.0];
        c.m = 0.4;
        c.tau2 = 0.09;
        let mut st = state_with(vec![c], vec![1.0], 2, 1);
        st.imputed_x = vec![(0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 40_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            impute_missing_covariates(&mut st, &data, &mut rng);
            s += st.imputed_x[0].1;
            s2 += st.imputed_x[0].1.powi(2);
        }
        let mean = s / reps as f64;
        let var = s2 / reps as f64 - mean * mean;
        assert!((mean - 0.4).abs() < 3.0 * (0.09f64 / reps as f64).sqrt());
        assert!((var - 0.09).abs() < 0.005);
    }

    #[test]
    fn run_chain_retains_expected_count_and_is_deterministic() {
        let raw = tiny_data(60, 5);
        let cfg = cfg3();
        let a = fit(raw.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = fit(raw, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.draws.len(), 1);
        assert_eq!(a.draws, b.draws);
        for d in &a.draws {
            d.validate(&cfg).unwrap();
            d.hypers.validate().unwrap();
        }
    }

    #[test]
    fn single_normal_posterior_mean() {
        // n = 500 draws from N(0, 1), no covariates, H = 10.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let records: Vec<_> = (0..500)
            .map(|_| AttemptRecord {
                y: Some(std_normal(&mut rng)),
                r: 1,
                x_cat: 1,
                x_cont: None,
                z: rng.random_range(0..2u8),
            })
            .collect();
        let raw = Dataset {
            records,
            k: 1,
            n_levels: 1,
        };
        let cfg = ModelConfig {
            h: 10,
            ..ModelConfig::full(1)
        }
        .schedule(1500, 500, 2);
        let fit = fit(raw, &cfg, &mut rng).unwrap();
        // Mixture mean of Y for a random subject, back on the raw scale.
        let means: Vec<f64> = fit
            .draws
            .iter()
            .map(|d| {
                let m: f64 = d
                    .clusters
                    .iter()
                    .zip(&d.sticks.pi)
                    .map(|(c, p)| p * (c.p_z * c.alpha[1] + (1.0 - c.p_z) * c.alpha[0]))
                    .sum();
                d.standardization.y_inverse(m)
            })
            .collect();
        let mu = crate::math::mean(&means);
        let sd = crate::math::variance(&means, 1).sqrt();
        assert!(mu.abs() < 3.0 * sd.max(0.02), "posterior mean {mu}, sd {sd}");
    }

    #[test]
    fn every_retained_draw_is_valid() {
        let raw = tiny_data(90, 6);
        let cfg = ModelConfig {
            h: 6,
            ..ModelConfig::full(3)
        }
        .schedule(200, 100, 10);
        let fit = fit(raw, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(fit.draws.len(), 10);
        for d in &fit.draws {
            d.validate(&cfg).unwrap();
            d.hypers.validate().unwrap();
        }
    }
}
