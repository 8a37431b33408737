//! MCMC engine: adaptive random-walk Metropolis within Gibbs over
//! transformed parameters, producing multi-chain [`DrawMatrix`] output
//! for the unit-level and area-level models, with or without the
//! benchmark likelihood in the target.
//!
//! Parameters with constrained supports are sampled on unconstrained
//! scales (log precision, logit mixing proportion, log cluster variance)
//! with the change-of-variable terms folded into the block targets.
//! Step sizes adapt toward a configurable acceptance rate during warmup
//! only; every chain owns an independent counter-based RNG stream, so
//! runs are reproducible and chains can execute in parallel.

mod fh;
mod kernel;
mod unit;

pub use fh::FhSampler;
pub use kernel::{accept_prob, metropolis, BlockTally, StepAdapter};
pub use unit::UnitSampler;

use crate::error::{Error, Result};
use crate::models::{ConstraintScale, Priors};
use crate::spatial::AreaGraph;
use crate::types::{Benchmark, ClusterDataset, DirectEstimates, DrawMatrix};

/// Run-length, seeding, and adaptation settings shared by all samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Independent chains (each with its own RNG stream).
    pub n_chains: usize,
    /// Adaptation iterations discarded before draws are kept.
    pub n_warmup: usize,
    /// Retained draws per chain.
    pub n_draws: usize,
    /// Base seed; chain c uses stream c of this seed.
    pub seed: u64,
    /// Proposals per Robbins-Monro adaptation window.
    pub adapt_window: usize,
    /// Acceptance rate the step sizes are tuned toward.
    pub target_accept: f64,
    /// Initial random-walk step size for every block.
    pub initial_step: f64,
    /// Emit per-fit progress lines to standard error.
    pub progress: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_draws: 1000,
            seed: 1,
            adapt_window: 20,
            target_accept: 0.234,
            initial_step: 0.5,
            progress: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::invalid("n_chains must be at least 1"));
        }
        if self.n_draws < 1 {
            return Err(Error::invalid("n_draws must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::invalid("initial_step must be positive"));
        }
        if self.adapt_window < 1 {
            return Err(Error::invalid("adapt_window must be at least 1"));
        }
        Ok(())
    }
}

/// Number of retries with jittered starting values before giving up on
/// a finite initial log posterior.
pub(crate) const INIT_RETRIES: usize = 100;

/// Post-warmup acceptance accounting for one chain.
#[derive(Debug, Clone)]
pub struct ChainAcceptance {
    pub chain: usize,
    /// (block name, frozen step size, tally) per proposal block.
    pub blocks: Vec<(&'static str, f64, BlockTally)>,
}

impl ChainAcceptance {
    /// Pooled acceptance rate over all blocks.
    pub fn overall_rate(&self) -> f64 {
        let (mut acc, mut prop) = (0u64, 0u64);
        for (_, _, t) in &self.blocks {
            acc += t.accepted;
            prop += t.proposed;
        }
        if prop == 0 {
            f64::NAN
        } else {
            acc as f64 / prop as f64
        }
    }
}

/// A sampler that can produce additional draws after construction, so
/// callers can iterate until an effective-sample-size or acceptance
/// target is met.
pub trait IncrementalSampler {
    /// Generates `n` more retained draws per chain.
    fn extend(&mut self, n: usize) -> Result<()>;
    /// Retained draws per chain so far.
    fn draws_per_chain(&self) -> usize;
    fn n_chains(&self) -> usize;
    /// Assembles everything retained so far into a draw matrix.
    fn collect(&self) -> Result<DrawMatrix>;
}

/// Fits the unit-level model without the benchmark term.
pub fn fit_unit(
    data: &ClusterDataset,
    graph: &AreaGraph,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> Result<DrawMatrix> {
    let mut s = UnitSampler::new(data, graph, priors, None, cfg)?;
    s.extend(cfg.n_draws)?;
    s.collect()
}

/// Fits the unit-level model jointly with the benchmark likelihood.
pub fn fit_unit_joint(
    data: &ClusterDataset,
    graph: &AreaGraph,
    priors: &Priors,
    bench: &Benchmark,
    scale: ConstraintScale,
    cfg: &SamplerConfig,
) -> Result<DrawMatrix> {
    let mut s = UnitSampler::new(data, graph, priors, Some((bench.clone(), scale)), cfg)?;
    s.extend(cfg.n_draws)?;
    s.collect()
}

/// Fits the area-level model on logit direct estimates without the
/// benchmark term.
pub fn fit_fh(
    direct: &DirectEstimates,
    graph: &AreaGraph,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> Result<DrawMatrix> {
    let mut s = FhSampler::new(direct, graph, priors, None, cfg)?;
    s.extend(cfg.n_draws)?;
    s.collect()
}

/// Fits the area-level model jointly with the benchmark likelihood.
pub fn fit_fh_joint(
    direct: &DirectEstimates,
    graph: &AreaGraph,
    priors: &Priors,
    bench: &Benchmark,
    cfg: &SamplerConfig,
) -> Result<DrawMatrix> {
    let mut s = FhSampler::new(direct, graph, priors, Some(bench.clone()), cfg)?;
    s.extend(cfg.n_draws)?;
    s.collect()
}
