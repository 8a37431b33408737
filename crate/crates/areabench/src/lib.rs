//! Fully Bayesian benchmarking of small-area prevalence estimates.
//!
//! Small-area models (unit-level binomial and area-level Fay-Herriot, both
//! with BYM2 spatial random effects) produce posterior draws of per-area
//! prevalences. A national-level benchmark value with known uncertainty can
//! then be imposed on those draws by one of several benchmarking methods:
//!
//! * exact and inexact moment-matching adjustment of point estimates,
//! * raking of draws to the benchmark total,
//! * rejection sampling against the benchmark likelihood,
//! * an independence Metropolis-Hastings sampler over draws from an
//!   intercept-shifted model, and
//! * a joint MCMC run with the benchmark likelihood in the posterior
//!   (the oracle the cheaper methods are compared against).
//!
//! Supporting modules provide spatial graph machinery ([`spatial`]),
//! adaptive random-walk Metropolis-within-Gibbs samplers ([`inference`]),
//! rank-normalized convergence diagnostics ([`diagnostics`]), and a
//! simulation harness ([`harness`]) that reproduces the benchmarking
//! method comparison over a grid of cluster sizes and benchmark settings.

pub mod benchmarkers;
pub mod diagnostics;
pub mod direct;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod link;
pub mod models;
pub mod spatial;
pub mod types;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use link::{expit, logit};
pub use types::{
    Benchmark, BenchmarkResult, ClusterDataset, ClusterRecord, DirectEstimates, DrawMatrix, Method,
};
