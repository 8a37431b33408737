//! Benchmark-augmented ("joint") posteriors: the unbenchmarked log
//! posterior plus the benchmark log likelihood evaluated at the state's
//! area prevalences. Sampling these is the exact reference the cheaper
//! post-hoc benchmarkers are compared against.

use crate::link::expit;
use crate::spatial::ScaledIcar;
use crate::types::{Benchmark, ClusterDataset, DirectEstimates};

use super::fh::{fh_logposterior, AreaModelState};
use super::priors::Priors;
use super::unit::{unit_area_prediction, unit_logposterior, UnitModelState};

/// Which area prevalence the benchmark constrains in the unit model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintScale {
    /// Cluster effect integrated out (the same prevalence the reported
    /// estimates use). Default.
    #[default]
    Marginalized,
    /// Prevalence of a cluster with zero cluster effect, expit(beta0 + b_i).
    Conditional,
}

/// Area prevalences a unit-model state exposes to the benchmark.
pub fn unit_constraint_theta(state: &UnitModelState, scale: ConstraintScale) -> Vec<f64> {
    match scale {
        ConstraintScale::Marginalized => unit_area_prediction(state),
        ConstraintScale::Conditional => state
            .bym2
            .effect()
            .iter()
            .map(|b| expit(state.beta0 + b))
            .collect(),
    }
}

/// Unit-model joint log posterior: unbenchmarked posterior plus the
/// benchmark likelihood at the chosen prevalence scale.
pub fn joint_unit_logposterior(
    state: &UnitModelState,
    data: &ClusterDataset,
    scaled: &ScaledIcar,
    priors: &Priors,
    bench: &Benchmark,
    scale: ConstraintScale,
) -> f64 {
    let base = unit_logposterior(state, data, scaled, priors);
    if base == f64::NEG_INFINITY {
        return base;
    }
    base + bench.loglik(&unit_constraint_theta(state, scale))
}

/// Area-model joint log posterior: theta_i = expit(eta_i).
pub fn joint_fh_logposterior(
    state: &AreaModelState,
    direct: &DirectEstimates,
    scaled: &ScaledIcar,
    priors: &Priors,
    bench: &Benchmark,
) -> f64 {
    let base = fh_logposterior(state, direct, scaled, priors);
    if base == f64::NEG_INFINITY {
        return base;
    }
    let theta: Vec<f64> = state.eta().iter().map(|&e| expit(e)).collect();
    base + bench.loglik(&theta)
}
