//! Logit link and its inverse, numerically stable over the full range.

use crate::error::{Error, Result};

/// Natural logarithm of p/(1-p). Errors outside the open unit interval.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::LogitDomain(p));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Inverse logit. Uses the branch that never exponentiates a large
/// positive argument, so it is monotone and stays in [0, 1] for all
/// finite inputs (and saturates cleanly at +/- infinity).
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
