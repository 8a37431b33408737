//! Split-R̂ and its rank-normalized form.

use super::{is_constant, rank_normalize, split_halves, validate_chains};
use crate::error::Result;

/// Split potential scale reduction: chains are halved, and R̂ compares
/// the pooled-variance estimate `V̂⁺ = ((m-1)/m) W + B/m` with the mean
/// within-half variance `W` (half length m, between-half variance B of
/// the half means):  `R̂ = sqrt(V̂⁺ / W)`.
///
/// Perfectly mixed (identical-sequence) halves give B = 0, hence the
/// deterministic floor `sqrt((m-1)/m)` slightly below one. Constant
/// halves give W = 0; the result is then `+inf`, which doubles as the
/// degeneracy signal — a constant chain can never demonstrate mixing.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    validate_chains(chains)?;
    Ok(split_rhat_presplit(&split_halves(chains)))
}

/// Split-R̂ after replacing draws by normal scores of their pooled ranks
/// (average ranks on ties), making the statistic invariant to monotone
/// transformations and robust to heavy tails.
pub fn rank_normalized_split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    validate_chains(chains)?;
    Ok(split_rhat_presplit(&rank_normalize(&split_halves(chains))))
}

/// Core statistic on already-split chains.
pub(crate) fn split_rhat_presplit(halves: &[Vec<f64>]) -> f64 {
    let k = halves.len();
    let m = halves[0].len();
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / m as f64)
        .collect();
    // W: mean of the unbiased within-half variances. A constant half
    // contributes exactly zero (the float sum would leave ulp noise).
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| {
            if is_constant(h) {
                0.0
            } else {
                h.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m as f64 - 1.0)
            }
        })
        .sum::<f64>()
        / k as f64;
    // B/m: unbiased variance of the half means.
    let grand = means.iter().sum::<f64>() / k as f64;
    let b_over_m = means
        .iter()
        .map(|mu| (mu - grand) * (mu - grand))
        .sum::<f64>()
        / (k as f64 - 1.0);
    if w <= 0.0 {
        return f64::INFINITY;
    }
    let v_plus = (m as f64 - 1.0) / m as f64 * w + b_over_m;
    (v_plus / w).sqrt()
}
