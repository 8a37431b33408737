//! Benchmarking methods: impose a national benchmark on small-area
//! posterior output.
//!
//! Five routes, in increasing order of fidelity to the joint benchmarked
//! posterior:
//!
//! * [`bayes_estimate`] — moment-matching adjustment of point estimates
//!   only (exact or penalized constraint);
//! * [`project_draws`] — the exact adjustment applied to every draw;
//! * [`rake_benchmark`] — rescale all draws by the ratio of the weighted
//!   median total to the benchmark value;
//! * [`rejection_benchmark`] — accept each unbenchmarked draw with
//!   probability proportional to the benchmark likelihood;
//! * [`mh_benchmark`] — independence MH over draws from an
//!   intercept-shifted refit, for benchmarks too tight for rejection.
//!
//! The draw-based methods all return a [`crate::types::BenchmarkResult`];
//! the sixth route — including the benchmark in the MCMC itself — lives
//! in [`crate::inference`] as the joint fits.

mod bayes;
mod mh;
mod rake;
mod rejection;

pub use bayes::{bayes_estimate, project_draws, BayesEstimateInputs, PointEstimates};
pub use mh::{mh_benchmark, InterceptShiftPrior, MhConfig, MhSampler};
pub use rake::rake_benchmark;
pub use rejection::rejection_benchmark;
