//! Convergence and sampling-quality diagnostics.
//!
//! The quantities reported per scalar are split-R̂ ([`split_rhat`]), its
//! rank-normalized form ([`rank_normalized_split_rhat`]), and the bulk
//! effective sample size ([`bulk_ess`]); [`DiagnosticsReport`] bundles
//! them over all scalar quantities of a draw matrix against pass/fail
//! thresholds (defaults 1.01 and 400). [`ess_to_target_runner`] drives
//! any incremental sampler until a target bulk-ESS (or accepted-draw
//! count under rejection filtering) is reached, timing the whole run.
//!
//! All statistics split each chain in half first, so within-chain drift
//! shows up as apparent between-chain disagreement, and the rank-based
//! forms replace draws by normal scores of their pooled ranks, making
//! them exactly invariant to monotone transformations of the draws.

mod ess;
mod report;
mod rhat;
mod runner;

pub use ess::bulk_ess;
pub use report::{DiagnosticsReport, DiagnosticsThresholds, ScalarDiagnostic};
pub use rhat::{rank_normalized_split_rhat, split_rhat};
pub use runner::{ess_to_target_runner, min_area_bulk_ess, EssTarget, RunnerOutcome};

use crate::error::{Error, Result};

/// Minimum draws per half-chain for any split statistic.
pub(crate) const MIN_HALF_LEN: usize = 4;

/// Checks the common preconditions: at least one chain, equal lengths,
/// and enough draws that each half has [`MIN_HALF_LEN`].
pub(crate) fn validate_chains(chains: &[Vec<f64>]) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::invalid("diagnostics need at least one chain"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("diagnostics need equal-length chains"));
    }
    if n / 2 < MIN_HALF_LEN {
        return Err(Error::invalid(format!(
            "diagnostics need at least {} draws per chain, got {n}",
            2 * MIN_HALF_LEN
        )));
    }
    Ok(())
}

/// Whether every value of the chain is exactly the same. Variance-type
/// sums over such a chain are mathematically zero but come out as
/// rounding noise when the mean is off by an ulp (summing equal
/// non-dyadic values is inexact), so callers short-circuit them to 0.
pub(crate) fn is_constant(chain: &[f64]) -> bool {
    chain.iter().all(|x| x.to_bits() == chain[0].to_bits())
}

/// Splits every chain into first and second halves (the middle draw of
/// an odd-length chain is dropped), doubling the chain count.
pub(crate) fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let m = c.len() / 2;
        out.push(c[..m].to_vec());
        out.push(c[c.len() - m..].to_vec());
    }
    out
}

/// Replaces every draw by the normal score of its rank in the pooled
/// sample: rank r among S draws (average ranks on ties) maps to
/// `Phi^{-1}((r - 3/8) / (S + 1/4))`. Shapes are preserved.
pub(crate) fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let s: usize = chains.iter().map(Vec::len).sum();
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(s);
    for (ci, c) in chains.iter().enumerate() {
        for pi in 0..c.len() {
            order.push((ci, pi));
        }
    }
    order.sort_by(|a, b| chains[a.0][a.1].total_cmp(&chains[b.0][b.1]));

    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0usize;
    while i < s {
        let v = chains[order[i].0][order[i].1];
        let mut j = i;
        while j + 1 < s && chains[order[j + 1].0][order[j + 1].1] == v {
            j += 1;
        }
        // 1-based average rank of the tie run [i, j].
        let rank = (i + j + 2) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s as f64 + 0.25));
        for t in i..=j {
            let (ci, pi) = order[t];
            out[ci][pi] = z;
        }
        i = j + 1;
    }
    out
}
