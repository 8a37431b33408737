//! Threshold reporting over all scalar quantities of a draw matrix.

use serde::Serialize;

use super::{bulk_ess, rank_normalized_split_rhat, split_rhat};
use crate::error::{Error, Result};
use crate::types::DrawMatrix;

/// Pass/fail cutoffs. The defaults are the usual reporting thresholds:
/// rank-normalized split-R̂ below 1.01 and bulk-ESS above 400.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsThresholds {
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for DiagnosticsThresholds {
    fn default() -> Self {
        DiagnosticsThresholds {
            max_rhat: 1.01,
            min_ess: 400.0,
        }
    }
}

/// Diagnostics for one scalar quantity (one area's prevalence, the
/// intercept, or a hyperparameter).
///
/// `rhat_ok` applies the R̂ threshold to the rank-normalized statistic;
/// `degenerate` marks constant chains, whose R̂ is +inf and whose ESS
/// is NaN — both fail their thresholds automatically.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub split_rhat: f64,
    pub rank_normalized_split_rhat: f64,
    pub bulk_ess: f64,
    pub degenerate: bool,
    pub rhat_ok: bool,
    pub ess_ok: bool,
}

/// Per-scalar convergence diagnostics for a draw matrix, with chain
/// layout and overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub thresholds: DiagnosticsThresholds,
    pub scalars: Vec<ScalarDiagnostic>,
    pub all_ok: bool,
}

impl DiagnosticsReport {
    /// Diagnose every scalar of `draws`: each area's prevalence, plus
    /// the intercept and hyperparameters when internals are present.
    pub fn for_draws(draws: &DrawMatrix, thresholds: DiagnosticsThresholds) -> Result<Self> {
        let n_chains = draws.n_chains();
        if draws.n_draws() % n_chains != 0 {
            return Err(Error::invalid("diagnostics need equally sized chains"));
        }
        let draws_per_chain = draws.n_draws() / n_chains;

        let mut scalars = Vec::new();
        for area in 0..draws.n_areas() {
            let chains = draws.area_chains(area);
            scalars.push(diagnose_scalar(
                format!("theta[{area}]"),
                &chains,
                &thresholds,
            )?);
        }
        if let Some(internals) = draws.internals() {
            let chains = column_chains(draws, &internals.beta0);
            scalars.push(diagnose_scalar("beta0".to_string(), &chains, &thresholds)?);
            for (name, col) in &internals.hypers {
                let chains = column_chains(draws, col);
                scalars.push(diagnose_scalar(name.clone(), &chains, &thresholds)?);
            }
        }
        let all_ok = scalars.iter().all(|s| s.rhat_ok && s.ess_ok);
        Ok(DiagnosticsReport {
            n_chains,
            draws_per_chain,
            thresholds,
            scalars,
            all_ok,
        })
    }

    pub fn worst_rhat(&self) -> f64 {
        self.scalars
            .iter()
            .map(|s| s.rank_normalized_split_rhat)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest bulk-ESS over scalars; NaN if any scalar is degenerate.
    pub fn min_bulk_ess(&self) -> f64 {
        let mut min = f64::INFINITY;
        for s in &self.scalars {
            if s.bulk_ess.is_nan() {
                return f64::NAN;
            }
            min = min.min(s.bulk_ess);
        }
        min
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("diagnostics serialization failed: {e}")))
    }
}

fn diagnose_scalar(
    name: String,
    chains: &[Vec<f64>],
    thresholds: &DiagnosticsThresholds,
) -> Result<ScalarDiagnostic> {
    let plain = split_rhat(chains)?;
    let ranked = rank_normalized_split_rhat(chains)?;
    let ess = bulk_ess(chains)?;
    let degenerate = !ranked.is_finite() || ess.is_nan();
    Ok(ScalarDiagnostic {
        name,
        split_rhat: plain,
        rank_normalized_split_rhat: ranked,
        bulk_ess: ess,
        degenerate,
        rhat_ok: ranked < thresholds.max_rhat,
        ess_ok: ess > thresholds.min_ess,
    })
}

/// Splits an internals column into per-chain vectors following the
/// matrix's chain ids.
fn column_chains(draws: &DrawMatrix, col: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); draws.n_chains()];
    for (k, &c) in draws.chain_ids().iter().enumerate() {
        out[c].push(col[k]);
    }
    out
}
