//! Univariate slice sampling (doubling + shrinkage) for the non-conjugate
//! shape hyperparameters.

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_DOUBLINGS: u32 = 100;

/// One slice-sampling update of `x0` under the log density `log_f`, using
/// the doubling procedure to bracket the slice and shrinkage to sample it.
/// Fails when the bracket still lies inside the slice after
/// [`MAX_DOUBLINGS`] doublings, which only happens for improper or corrupt
/// targets.
pub fn slice_sample<R, F>(x0: f64, mut log_f: F, width: f64, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let f0 = log_f(x0);
    if !f0.is_finite() {
        return Err(Error::Numeric(format!(
            "slice sampler started at x={x0} with log density {f0}"
        )));
    }
    let level = f0 + rng.random::<f64>().ln();

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut f_left = log_f(left);
    let mut f_right = log_f(right);
    let mut doublings = 0;
    while level < f_left || level < f_right {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::Numeric(format!(
                "slice bracket around x={x0} did not close after {MAX_DOUBLINGS} doublings"
            )));
        }
        doublings += 1;
        let w = right - left;
        if rng.random::<f64>() < 0.5 {
            left -= w;
            f_left = log_f(left);
        } else {
            right += w;
            f_right = log_f(right);
        }
    }

    let (bracket_left, bracket_right) = (left, right);
    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        let f1 = log_f(x1);
        if level < f1 && accepts(x0, x1, level, bracket_left, bracket_right, width, &mut log_f) {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < 1e-300_f64.max(f64::EPSILON * x0.abs()) {
            // The slice has collapsed onto x0.
            return Ok(x0);
        }
    }
}

/// Neal's acceptance test for doubling: rejects points from which the
/// doubling procedure would not have produced the same bracket.
fn accepts<F: FnMut(f64) -> f64>(
    x0: f64,
    x1: f64,
    level: f64,
    mut left: f64,
    mut right: f64,
    width: f64,
    log_f: &mut F,
) -> bool {
    let mut differ = false;
    while right - left > 1.1 * width {
        let mid = 0.5 * (left + right);
        if (x0 < mid) != (x1 < mid) {
            differ = true;
        }
        if x1 < mid {
            right = mid;
        } else {
            left = mid;
        }
        if differ && level >= log_f(left) && level >= log_f(right) {
            return false;
        }
    }
    true
}
