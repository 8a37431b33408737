//! Extend a sampler in increments until a stopping target is met.
//!
//! The two stopping rules mirror how the benchmarking routes are run in
//! practice: chain-based routes extend until the smallest per-area bulk
//! effective sample size reaches a floor, while the rejection route
//! extends the unadjusted sampler until filtering against the benchmark
//! has accepted enough draws. The wall clock covers everything from
//! sampler construction (fitting and warmup included) through the final
//! measurement, so recorded times reflect the true cost of reaching the
//! target, not just the incremental sampling.

use std::time::{Duration, Instant};

use crate::benchmarkers::rejection_benchmark;
use crate::diagnostics::bulk_ess;
use crate::error::{Error, Result};
use crate::inference::IncrementalSampler;
use crate::types::{Benchmark, BenchmarkResult, DrawMatrix};

/// Stopping rule for [`ess_to_target_runner`].
#[derive(Debug, Clone)]
pub enum EssTarget {
    /// Stop once the minimum bulk effective sample size over area
    /// columns reaches the value.
    BulkEss(f64),
    /// Stop once rejection filtering against the benchmark has accepted
    /// `target` draws. `seed` drives the filtering uniforms.
    Accepted {
        bench: Benchmark,
        target: usize,
        seed: u64,
    },
}

impl EssTarget {
    fn validate(&self) -> Result<()> {
        match self {
            EssTarget::BulkEss(v) => {
                if !(*v > 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "bulk-ESS target must be positive and finite, got {v}"
                    )));
                }
            }
            EssTarget::Accepted { target, .. } => {
                if *target == 0 {
                    return Err(Error::invalid("accepted-draw target must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// What a runner call produced.
#[derive(Debug, Clone)]
pub struct RunnerOutcome {
    /// Everything the sampler retained by the time it stopped.
    pub draws: DrawMatrix,
    /// Rejection-filtered result for [`EssTarget::Accepted`]; `None`
    /// under a bulk-ESS target, or when filtering accepted nothing.
    pub benchmarked: Option<BenchmarkResult>,
    /// Wall time from sampler construction through the final measurement.
    pub wall: Duration,
    /// Extension rounds actually run.
    pub increments: usize,
    /// Whether the target was met before the increment cap.
    pub reached: bool,
    /// Final value of the monitored quantity: the minimum per-area bulk
    /// ESS (NaN when any area is degenerate), or the accepted count.
    pub metric: f64,
}

/// Builds a sampler and extends it by `increment_draws` per chain until
/// `target` is met or `max_increments` rounds have run.
///
/// Hitting the cap is not an error: the outcome comes back with
/// `reached == false` and whatever was retained, so callers can flag a
/// partial result and move on. The sampler is handed back alongside the
/// outcome so sampler-side state (e.g. an acceptance rate) stays
/// readable after the run.
pub fn ess_to_target_runner<S, F>(
    build: F,
    target: &EssTarget,
    increment_draws: usize,
    max_increments: usize,
) -> Result<(RunnerOutcome, S)>
where
    S: IncrementalSampler,
    F: FnOnce() -> Result<S>,
{
    target.validate()?;
    if increment_draws == 0 {
        return Err(Error::invalid("increment size must be positive"));
    }
    if max_increments == 0 {
        return Err(Error::invalid("increment cap must be positive"));
    }

    let start = Instant::now();
    let mut sampler = build()?;
    let mut increments = 0;
    let mut reached = false;
    let mut metric = f64::NAN;
    let mut benchmarked: Option<BenchmarkResult> = None;
    let mut draws: Option<DrawMatrix> = None;

    while increments < max_increments {
        sampler.extend(increment_draws)?;
        increments += 1;
        let collected = sampler.collect()?;
        match target {
            EssTarget::BulkEss(floor) => {
                metric = min_area_bulk_ess(&collected)?;
                reached = metric >= *floor;
            }
            EssTarget::Accepted {
                bench,
                target: want,
                seed,
            } => {
                match rejection_benchmark(&collected, bench, Some(*want), *seed) {
                    Ok(result) => {
                        metric = result.draws.n_draws() as f64;
                        reached = result.draws.n_draws() >= *want;
                        benchmarked = Some(result);
                    }
                    // Nothing accepted on this pass: keep extending.
                    Err(Error::BenchmarkInconsistent { .. }) => {
                        metric = 0.0;
                        reached = false;
                        benchmarked = None;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        draws = Some(collected);
        if reached {
            break;
        }
    }
    let wall = start.elapsed();

    let outcome = RunnerOutcome {
        // The loop always runs at least once, so a collected matrix exists.
        draws: draws.expect("at least one increment ran"),
        benchmarked,
        wall,
        increments,
        reached,
        metric,
    };
    Ok((outcome, sampler))
}

/// Minimum bulk ESS over area columns; NaN as soon as any area is
/// degenerate (`f64::min` would silently skip NaN).
pub fn min_area_bulk_ess(draws: &DrawMatrix) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for area in 0..draws.n_areas() {
        let ess = bulk_ess(&draws.area_chains(area))?;
        if ess.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.min(ess);
    }
    Ok(worst)
}
