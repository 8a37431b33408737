//! Independence Metropolis-Hastings over draws from an intercept-shifted
//! refit.
//!
//! The input draws come from a refit of the model whose flat intercept
//! prior has been replaced by the shift prior `N(logit(y2), sigma2)`,
//! pulling the sampler toward the benchmark so that proposals land where
//! the benchmarked posterior has mass. The chain state is a row index
//! into those draws; proposals pick a row uniformly at random (with
//! replacement), and a move from row `i` to row `j` is accepted with
//! probability
//!
//! ```text
//! min(1, [L(y2 | theta_j) p+(beta0_i)] / [L(y2 | theta_i) p+(beta0_j)])
//! ```
//!
//! where `L` is the benchmark likelihood and `p+` the shift prior
//! density: the prior ratio cancels the shift out of the refit, leaving
//! the benchmark likelihood in, so the visited rows are distributed as
//! the joint benchmarked posterior. Correctness therefore requires that
//! the refit differ from the unadjusted model *only* in its intercept
//! prior (flat there, `p+` here) — that cannot be checked from the draws
//! and is the caller's contract.
//!
//! The output is the visited-state sequence per chain, duplicates and
//! all: rejected proposals repeat the current row, and those repeats
//! carry the serial dependence that diagnostics need to see.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::IncrementalSampler;
use crate::link::logit;
use crate::types::{Benchmark, BenchmarkResult, DrawMatrix, Method};

/// The normal prior placed on the intercept of the shifted refit,
/// `N(logit(y2), sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterceptShiftPrior {
    mean: f64,
    variance: f64,
}

impl InterceptShiftPrior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid(format!(
                "shift prior mean {mean} not finite"
            )));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "shift prior variance must be positive and finite, got {variance}"
            )));
        }
        Ok(InterceptShiftPrior { mean, variance })
    }

    /// Centered on the benchmark value: `N(logit(y2), variance)`.
    pub fn for_benchmark(bench: &Benchmark, variance: f64) -> Result<Self> {
        InterceptShiftPrior::new(logit(bench.y2())?, variance)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn logpdf(&self, beta0: f64) -> f64 {
        let d = beta0 - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }
}

/// Chain layout for the independence MH run.
#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    /// Recorded (post-warmup) steps per chain.
    pub n_draws: usize,
    /// Pooled acceptance below this attaches a warning: the shifted
    /// refit is probably far from the benchmarked posterior.
    pub acceptance_floor: f64,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_draws: 1000,
            acceptance_floor: 0.01,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if self.n_draws == 0 {
            return Err(Error::invalid("need at least one recorded draw per chain"));
        }
        if !(0.0..1.0).contains(&self.acceptance_floor) {
            return Err(Error::invalid(format!(
                "acceptance floor must be in [0, 1), got {}",
                self.acceptance_floor
            )));
        }
        Ok(())
    }
}

struct MhChain {
    rng: ChaCha12Rng,
    cur: usize,
    visited: Vec<usize>,
    /// All steps taken, warmup included (for error reporting).
    steps_taken: usize,
    /// Accepted moves among recorded (post-warmup) steps.
    accepted: usize,
}

impl MhChain {
    /// One proposal; returns whether it was adopted.
    fn step(&mut self, score: &[f64]) -> Result<bool> {
        let prop = self.rng.gen_range(0..score.len());
        let ln_a = score[prop] - score[self.cur];
        let a = if ln_a >= 0.0 {
            1.0
        } else if ln_a == f64::NEG_INFINITY {
            0.0
        } else if ln_a.is_nan() {
            return Err(Error::NonFiniteAcceptance {
                step: self.steps_taken,
            });
        } else {
            ln_a.exp()
        };
        self.steps_taken += 1;
        let adopt = self.rng.gen::<f64>() < a;
        if adopt {
            self.cur = prop;
        }
        Ok(adopt)
    }
}

/// Incremental form of the independence MH resampler: construction runs
/// the warmup, and each [`IncrementalSampler::extend`] call records more
/// visited rows per chain, so a caller can keep going until diagnostics
/// are satisfied. [`mh_benchmark`] wraps this for the one-shot case.
pub struct MhSampler<'a> {
    pool: &'a DrawMatrix,
    score: Vec<f64>,
    chains: Vec<MhChain>,
}

impl<'a> MhSampler<'a> {
    pub fn new(
        adjusted: &'a DrawMatrix,
        bench: &Benchmark,
        shift_prior: &InterceptShiftPrior,
        n_chains: usize,
        n_warmup: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if adjusted.n_areas() != bench.n_areas() {
            return Err(Error::invalid(format!(
                "draws cover {} areas, benchmark {}",
                adjusted.n_areas(),
                bench.n_areas()
            )));
        }
        let internals = adjusted.internals().ok_or_else(|| {
            Error::invalid(
                "independence MH needs sampler draws with internals (per-draw intercepts)",
            )
        })?;
        let n_rows = adjusted.n_draws();

        // Per-row log target-to-proposal ratio: benchmark log likelihood
        // minus shift-prior log density. The acceptance ratio between
        // rows is the difference of these scores.
        let score: Vec<f64> = (0..n_rows)
            .map(|k| bench.loglik(adjusted.theta_row(k)) - shift_prior.logpdf(internals.beta0[k]))
            .collect();

        let chains = (0..n_chains)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let cur = rng.gen_range(0..n_rows);
                let mut chain = MhChain {
                    rng,
                    cur,
                    visited: Vec::new(),
                    steps_taken: 0,
                    accepted: 0,
                };
                for _ in 0..n_warmup {
                    chain.step(&score)?;
                }
                Ok(chain)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MhSampler {
            pool: adjusted,
            score,
            chains,
        })
    }

    /// Pooled post-warmup acceptance rate (NaN before any extension).
    pub fn acceptance_rate(&self) -> f64 {
        let accepted: usize = self.chains.iter().map(|c| c.accepted).sum();
        let recorded: usize = self.chains.iter().map(|c| c.visited.len()).sum();
        accepted as f64 / recorded as f64
    }
}

impl IncrementalSampler for MhSampler<'_> {
    fn extend(&mut self, n: usize) -> Result<()> {
        let score = &self.score;
        self.chains
            .par_iter_mut()
            .map(|chain| {
                chain.visited.reserve(n);
                for _ in 0..n {
                    let adopted = chain.step(score)?;
                    if adopted {
                        chain.accepted += 1;
                    }
                    chain.visited.push(chain.cur);
                }
                Ok(())
            })
            .collect::<Result<()>>()
    }

    fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.visited.len())
    }

    fn n_chains(&self) -> usize {
        self.chains.len()
    }

    fn collect(&self) -> Result<DrawMatrix> {
        if self.draws_per_chain() == 0 {
            return Err(Error::invalid("no recorded draws to collect"));
        }
        let rows: Vec<Vec<usize>> = self.chains.iter().map(|c| c.visited.clone()).collect();
        self.pool.gather_chains(&rows)
    }
}

/// Resample `adjusted` draws into the benchmarked posterior by
/// independence MH.
///
/// `adjusted` must carry internals (the per-draw intercept enters the
/// acceptance ratio), and must come from the intercept-shifted refit
/// described at the module level. The result keeps the internals of
/// every visited row, so hyperparameter draws ride along.
pub fn mh_benchmark(
    adjusted: &DrawMatrix,
    bench: &Benchmark,
    shift_prior: &InterceptShiftPrior,
    cfg: &MhConfig,
    seed: u64,
) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let mut sampler = MhSampler::new(
        adjusted,
        bench,
        shift_prior,
        cfg.n_chains,
        cfg.n_warmup,
        seed,
    )?;
    sampler.extend(cfg.n_draws)?;
    let rate = sampler.acceptance_rate();
    let draws = sampler.collect()?;

    let mut warnings = Vec::new();
    if rate < cfg.acceptance_floor {
        warnings.push(format!(
            "independence MH acceptance rate {rate:.4} is below {}; \
             the shifted refit may sit far from the benchmarked posterior",
            cfg.acceptance_floor
        ));
    }
    Ok(BenchmarkResult {
        method: Method::Mh,
        draws,
        acceptance_rate: Some(rate),
        flagged_rows: vec![],
        warnings,
    })
}
