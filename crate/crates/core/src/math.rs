//! Small numeric kernels shared by the sampler and the estimands: stable
//! log-sum-exp, categorical draws from log weights, and the handful of
//! distributions `rand_distr` does not expose in the parameterization we need.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log weights in place into probabilities. Returns `None` when
/// every weight is `-inf` (or any is NaN).
pub fn normalize_log_weights(log_w: &mut [f64]) -> Option<()> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    for w in log_w.iter_mut() {
        *w = (*w - lse).exp();
    }
    Some(())
}

/// Draws an index from unnormalized log weights. `scratch` is overwritten.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], scratch: &mut Vec<f64>, rng: &mut R) -> Option<usize> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    scratch.clear();
    scratch.extend(log_w.iter().map(|w| (w - max).exp()));
    Some(sample_categorical(scratch, rng))
}

/// Draws an index from nonnegative (not necessarily normalized) weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding can push u past the last positive bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
pub fn normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    mean + var.sqrt() * std_normal(rng)
}

/// Gamma with shape/rate parameterization.
pub fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive and finite")
        .sample(rng)
}

/// Inverse gamma with shape `a` and scale `b`: density ∝ x^{-a-1} e^{-b/x}.
pub fn inv_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    1.0 / gamma_rate(a, b, rng)
}

pub fn inv_gamma_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters must be positive and finite")
        .sample(rng)
}

/// Dirichlet draw via normalized gammas. Shapes below one are drawn on the
/// log scale (Gamma(a) = Gamma(a + 1) · U^{1/a}) so tiny concentrations do
/// not collapse every coordinate to zero.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                gamma_rate(a, 1.0, rng).ln()
            } else {
                let g = gamma_rate(a + 1.0, 1.0, rng).ln();
                let u: f64 = rng.random::<f64>();
                g + u.ln() / a
            }
        })
        .collect();
    let lse = log_sum_exp(&logs);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let s: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= s;
    }
    out
}

/// Equal-tail quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance with divisor `n - ddof`.
pub fn variance(xs: &[f64], ddof: usize) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - ddof) as f64
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
