//! Execution of one grid cell: fit, benchmark with each requested method,
//! and collect per-replicate records for the report writers.
//!
//! A cell is run replicate by replicate.  Within a replicate the methods
//! run in a canonical order — rejection, MH, joint, rake, Bayes estimate —
//! and the records come back in that order.  The rejection run doubles as
//! the provider of the unbenchmarked draw pool that rake and the Bayes
//! estimate post-process, so those two report only their (tiny) own
//! processing time on top of it; when rejection is not requested, a
//! dedicated untimed fit supplies the pool instead.
//!
//! A method failure (e.g. raking pushed a draw out of range, or the
//! rejection filter found nothing to accept) is recorded on the method's
//! row and the rest of the replicate continues.

use std::time::Instant;

use rayon::prelude::*;

use crate::benchmarkers::{
    bayes_estimate, rake_benchmark, BayesEstimateInputs, InterceptShiftPrior, MhSampler,
};
use crate::diagnostics::{ess_to_target_runner, min_area_bulk_ess, EssTarget};
use crate::error::{Error, Result};
use crate::inference::{fit_unit, SamplerConfig, UnitSampler};
use crate::models::{ClusterVariancePrior, ConstraintScale, InterceptPrior, Priors};
use crate::spatial::AreaGraph;
use crate::types::{Benchmark, ClusterDataset, DrawMatrix, Method};

use super::sim::{
    derive_seed, simulate_dataset, GridCell, SimulationSpec, TAG_ADJUSTED_FIT, TAG_FILTER,
    TAG_FREE_FIT, TAG_JOINT_FIT, TAG_MH,
};
use super::two_sample_ks;

/// Methods the study grid knows how to run, in canonical record order.
const STUDY_METHODS: [Method; 5] = [
    Method::Rejection,
    Method::Mh,
    Method::Joint,
    Method::Rake,
    Method::Bayes,
];

/// Priors used throughout the simulation study: the unit-level defaults
/// with a loggamma(0.1, 0.1) prior on the cluster-level log precision in
/// place of the PC prior.
pub fn study_priors() -> Priors {
    Priors {
        cluster_variance: ClusterVariancePrior::GammaPrecision {
            shape: 0.1,
            rate: 0.1,
        },
        ..Priors::default_unit()
    }
}

/// Budgets and sampler shape for running one cell.
#[derive(Debug, Clone)]
pub struct CellRunConfig {
    /// Accepted draws the rejection filter must reach.
    pub rejection_target: usize,
    /// Minimum-over-areas bulk ESS the MH and joint samplers must reach.
    pub ess_target: f64,
    /// Chains per sampler.
    pub n_chains: usize,
    /// Warmup iterations per chain.
    pub n_warmup: usize,
    /// Retained draws per chain for one-shot pool fits (the adjusted fit
    /// behind MH, and the fallback unbenchmarked fit).
    pub pool_draws_per_chain: usize,
    /// Draws per chain added by each runner increment.
    pub increment_draws: usize,
    /// Increment cap before a runner gives up and reports a partial run.
    pub max_increments: usize,
    /// Variance of the shifted intercept prior behind the MH benchmarker.
    pub mh_shift_variance: f64,
    /// Run the replicates of a cell on the worker pool instead of serially.
    pub parallel_replicates: bool,
    /// Print a progress line per replicate and method to stderr.
    pub progress: bool,
}

impl Default for CellRunConfig {
    fn default() -> Self {
        CellRunConfig {
            rejection_target: 1000,
            ess_target: 1000.0,
            n_chains: 4,
            n_warmup: 1000,
            pool_draws_per_chain: 2500,
            increment_draws: 500,
            max_increments: 40,
            mh_shift_variance: 0.1_f64.sqrt(),
            parallel_replicates: false,
            progress: false,
        }
    }
}

impl CellRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rejection_target == 0 {
            return Err(Error::invalid("rejection target must be positive"));
        }
        if !(self.ess_target > 0.0) || !self.ess_target.is_finite() {
            return Err(Error::invalid("ESS target must be positive and finite"));
        }
        if self.n_chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if self.pool_draws_per_chain == 0 || self.increment_draws == 0 {
            return Err(Error::invalid("draw budgets must be positive"));
        }
        if self.max_increments == 0 {
            return Err(Error::invalid("increment cap must be positive"));
        }
        if !(self.mh_shift_variance > 0.0) || !self.mh_shift_variance.is_finite() {
            return Err(Error::invalid(
                "MH shift prior variance must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// What one method did on one replicate.
#[derive(Debug, Clone)]
pub struct MethodRecord {
    pub method: Method,
    /// Wall-clock seconds attributed to the method.  For rejection, MH and
    /// joint this covers model fitting and sampling to the stopping rule;
    /// for rake and the Bayes estimate it is the post-processing time on
    /// top of the shared unbenchmarked pool.
    pub seconds: f64,
    pub acceptance_rate: Option<f64>,
    /// Minimum-over-areas bulk ESS of the benchmarked draws, where draws
    /// exist in measurable shape.
    pub bulk_ess: Option<f64>,
    /// Whether the stopping rule was reached (sampling methods only).
    pub reached_target: Option<bool>,
    /// Benchmarked draws retained (accepted draws for rejection).
    pub n_draws: Option<usize>,
    /// Posterior mean of the weighted combination under the method.
    pub weighted_mean: Option<f64>,
    pub area_medians: Vec<f64>,
    pub area_means: Vec<f64>,
    pub warnings: Vec<String>,
    /// Failure message when the method produced no usable output.
    pub error: Option<String>,
}

fn failed(method: Method, seconds: f64, err: &Error) -> MethodRecord {
    MethodRecord {
        method,
        seconds,
        acceptance_rate: None,
        bulk_ess: None,
        reached_target: None,
        n_draws: None,
        weighted_mean: None,
        area_medians: Vec::new(),
        area_means: Vec::new(),
        warnings: Vec::new(),
        error: Some(err.to_string()),
    }
}

/// One cross-method agreement measurement: the two-sample KS statistic for
/// one area between two fully Bayesian methods.
#[derive(Debug, Clone)]
pub struct KsRecord {
    pub method_a: Method,
    pub method_b: Method,
    pub area: usize,
    pub statistic: f64,
}

/// Everything recorded about one replicate of a cell.
#[derive(Debug, Clone)]
pub struct ReplicateReport {
    pub replicate: usize,
    /// Posterior mean of the weighted combination under the unbenchmarked
    /// fit, when one was produced.
    pub free_weighted_mean: Option<f64>,
    pub records: Vec<MethodRecord>,
    pub ks: Vec<KsRecord>,
}

/// A cell's replicates, in replicate order.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub cell: GridCell,
    pub replicates: Vec<ReplicateReport>,
}

fn validate_methods(methods: &[Method]) -> Result<()> {
    for (i, m) in methods.iter().enumerate() {
        if !STUDY_METHODS.contains(m) {
            return Err(Error::invalid(format!(
                "method {} is not part of the study grid",
                m.name()
            )));
        }
        if methods[..i].contains(m) {
            return Err(Error::invalid(format!("method {} listed twice", m.name())));
        }
    }
    Ok(())
}

fn sampler_cfg(cfg: &CellRunConfig, seed: u64, n_draws: usize) -> SamplerConfig {
    SamplerConfig {
        n_chains: cfg.n_chains,
        n_warmup: cfg.n_warmup,
        n_draws,
        seed,
        progress: cfg.progress,
        ..SamplerConfig::default()
    }
}

fn weighted_mean(draws: &DrawMatrix, bench: &Benchmark) -> f64 {
    let sums = draws.weighted_sums(bench.weights());
    sums.iter().sum::<f64>() / sums.len() as f64
}

/// Run every requested method on every replicate of one cell.
///
/// `methods` must be a duplicate-free subset of the study methods; an
/// empty slice is allowed and yields replicates with no records (the
/// report writers then emit header-only tables).
pub fn run_cell(
    spec: &SimulationSpec,
    cell: &GridCell,
    methods: &[Method],
    cfg: &CellRunConfig,
) -> Result<CellReport> {
    spec.validate()?;
    cell.validate()?;
    cfg.validate()?;
    validate_methods(methods)?;
    if spec.n_areas != 9 {
        return Err(Error::invalid(
            "the study graph covers exactly nine areas; set n_areas = 9",
        ));
    }
    let graph = AreaGraph::south_africa_provinces();

    let reps: Vec<usize> = (0..spec.replicates).collect();
    let run = |&rep: &usize| run_replicate(spec, cell, methods, cfg, &graph, rep);
    let replicates: Vec<ReplicateReport> = if cfg.parallel_replicates {
        reps.par_iter().map(run).collect::<Result<_>>()?
    } else {
        reps.iter().map(run).collect::<Result<_>>()?
    };

    Ok(CellReport {
        cell: *cell,
        replicates,
    })
}

fn run_replicate(
    spec: &SimulationSpec,
    cell: &GridCell,
    methods: &[Method],
    cfg: &CellRunConfig,
    graph: &AreaGraph,
    rep: usize,
) -> Result<ReplicateReport> {
    let data = simulate_dataset(spec, cell, rep)?;
    let bench = Benchmark::new(cell.y2, cell.sigma2_y2, spec.weights())?;
    let priors = study_priors();
    let seed_of =
        |tag: u64| derive_seed(&[spec.seed, tag, cell.clusters_per_area as u64, rep as u64]);
    let has = |m: Method| methods.contains(&m);
    let note = |m: Method| {
        if cfg.progress {
            eprintln!("cell {} replicate {}: {}", cell.label(), rep, m.name());
        }
    };

    let mut records = Vec::new();
    // Benchmarked draws of the fully Bayesian methods, kept for the
    // pairwise KS comparison; push order matches the canonical order.
    let mut samples: Vec<(Method, DrawMatrix)> = Vec::new();
    let mut free_pool: Option<DrawMatrix> = None;
    let mut free_error: Option<Error> = None;

    if has(Method::Rejection) {
        note(Method::Rejection);
        match run_rejection(
            &data,
            graph,
            &bench,
            &priors,
            cfg,
            seed_of(TAG_FREE_FIT),
            seed_of(TAG_FILTER),
        ) {
            Ok((rec, pool, accepted)) => {
                if let Some(a) = accepted {
                    samples.push((Method::Rejection, a));
                }
                free_pool = Some(pool);
                records.push(rec);
            }
            Err(e) => records.push(failed(Method::Rejection, 0.0, &e)),
        }
    }
    // Rake and the Bayes estimate post-process an unbenchmarked pool; when
    // rejection did not leave one behind, fit it here (untimed: these
    // methods report only their own processing time).
    if free_pool.is_none() && (has(Method::Rake) || has(Method::Bayes)) {
        let scfg = sampler_cfg(cfg, seed_of(TAG_FREE_FIT), cfg.pool_draws_per_chain);
        match fit_unit(&data, graph, &priors, &scfg) {
            Ok(m) => free_pool = Some(m),
            Err(e) => free_error = Some(e),
        }
    }

    if has(Method::Mh) {
        note(Method::Mh);
        match run_mh(
            &data,
            graph,
            &bench,
            &priors,
            cfg,
            seed_of(TAG_ADJUSTED_FIT),
            seed_of(TAG_MH),
        ) {
            Ok((rec, draws)) => {
                samples.push((Method::Mh, draws));
                records.push(rec);
            }
            Err(e) => records.push(failed(Method::Mh, 0.0, &e)),
        }
    }

    if has(Method::Joint) {
        note(Method::Joint);
        match run_joint(&data, graph, &bench, &priors, cfg, seed_of(TAG_JOINT_FIT)) {
            Ok((rec, draws)) => {
                samples.push((Method::Joint, draws));
                records.push(rec);
            }
            Err(e) => records.push(failed(Method::Joint, 0.0, &e)),
        }
    }

    if has(Method::Rake) {
        note(Method::Rake);
        records.push(match (&free_pool, &free_error) {
            (Some(pool), _) => run_rake(pool, &bench),
            (None, Some(e)) => failed(Method::Rake, 0.0, e),
            (None, None) => failed(
                Method::Rake,
                0.0,
                &Error::invalid("no unbenchmarked pool available"),
            ),
        });
    }

    if has(Method::Bayes) {
        note(Method::Bayes);
        records.push(match (&free_pool, &free_error) {
            (Some(pool), _) => run_bayes(pool, &bench),
            (None, Some(e)) => failed(Method::Bayes, 0.0, e),
            (None, None) => failed(
                Method::Bayes,
                0.0,
                &Error::invalid("no unbenchmarked pool available"),
            ),
        });
    }

    let free_weighted_mean = free_pool.as_ref().map(|m| weighted_mean(m, &bench));

    let mut ks = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let (ma, da) = &samples[i];
            let (mb, db) = &samples[j];
            for area in 0..da.n_areas() {
                ks.push(KsRecord {
                    method_a: *ma,
                    method_b: *mb,
                    area,
                    statistic: two_sample_ks(&da.area_draws(area), &db.area_draws(area)),
                });
            }
        }
    }

    Ok(ReplicateReport {
        replicate: rep,
        free_weighted_mean,
        records,
        ks,
    })
}

/// Rejection: fit the unbenchmarked model incrementally until the filter
/// keeps enough draws.  Returns the record, the full unbenchmarked pool
/// (reused by rake and the Bayes estimate), and the accepted draws.
fn run_rejection(
    data: &ClusterDataset,
    graph: &AreaGraph,
    bench: &Benchmark,
    priors: &Priors,
    cfg: &CellRunConfig,
    fit_seed: u64,
    filter_seed: u64,
) -> Result<(MethodRecord, DrawMatrix, Option<DrawMatrix>)> {
    let scfg = sampler_cfg(cfg, fit_seed, cfg.increment_draws);
    let target = EssTarget::Accepted {
        bench: bench.clone(),
        target: cfg.rejection_target,
        seed: filter_seed,
    };
    let (out, _) = ess_to_target_runner(
        || UnitSampler::new(data, graph, priors, None, &scfg),
        &target,
        cfg.increment_draws,
        cfg.max_increments,
    )?;
    let seconds = out.wall.as_secs_f64();
    let pool = out.draws;

    let mut warnings = Vec::new();
    if !out.reached {
        warnings.push(format!(
            "increment cap hit with {:.0} of {} accepted draws",
            out.metric, cfg.rejection_target
        ));
    }
    let record = match &out.benchmarked {
        Some(r) => {
            warnings.extend(r.warnings.iter().cloned());
            MethodRecord {
                method: Method::Rejection,
                seconds,
                acceptance_rate: r.acceptance_rate,
                bulk_ess: min_area_bulk_ess(&r.draws).ok(),
                reached_target: Some(out.reached),
                n_draws: Some(r.draws.n_draws()),
                weighted_mean: Some(weighted_mean(&r.draws, bench)),
                area_medians: r.draws.area_medians(),
                area_means: r.draws.area_means(),
                warnings,
                error: None,
            }
        }
        None => MethodRecord {
            method: Method::Rejection,
            seconds,
            acceptance_rate: Some(0.0),
            bulk_ess: None,
            reached_target: Some(false),
            n_draws: Some(0),
            weighted_mean: None,
            area_medians: Vec::new(),
            area_means: Vec::new(),
            warnings,
            error: Some(format!(
                "no draws accepted over {} pooled draws",
                pool.n_draws()
            )),
        },
    };
    let accepted = out.benchmarked.map(|r| r.draws);
    Ok((record, pool, accepted))
}

/// Independence MH: fit the intercept-shifted model, then reweight its
/// pool by MH until the ESS floor is reached.  The recorded seconds cover
/// both stages.
fn run_mh(
    data: &ClusterDataset,
    graph: &AreaGraph,
    bench: &Benchmark,
    priors: &Priors,
    cfg: &CellRunConfig,
    fit_seed: u64,
    chain_seed: u64,
) -> Result<(MethodRecord, DrawMatrix)> {
    let start = Instant::now();
    let shift = InterceptShiftPrior::for_benchmark(bench, cfg.mh_shift_variance)?;
    let adjusted_priors = Priors {
        intercept: InterceptPrior::Normal {
            mean: shift.mean(),
            variance: shift.variance(),
        },
        ..*priors
    };
    let scfg = sampler_cfg(cfg, fit_seed, cfg.pool_draws_per_chain);
    let adjusted = fit_unit(data, graph, &adjusted_priors, &scfg)?;

    let (out, sampler) = ess_to_target_runner(
        || {
            MhSampler::new(
                &adjusted,
                bench,
                &shift,
                cfg.n_chains,
                cfg.n_warmup,
                chain_seed,
            )
        },
        &EssTarget::BulkEss(cfg.ess_target),
        cfg.increment_draws,
        cfg.max_increments,
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let draws = out.draws;

    let mut warnings = Vec::new();
    if !out.reached {
        warnings.push(format!(
            "increment cap hit at bulk ESS {:.1} (target {:.0})",
            out.metric, cfg.ess_target
        ));
    }
    let record = MethodRecord {
        method: Method::Mh,
        seconds,
        acceptance_rate: Some(sampler.acceptance_rate()),
        bulk_ess: Some(out.metric),
        reached_target: Some(out.reached),
        n_draws: Some(draws.n_draws()),
        weighted_mean: Some(weighted_mean(&draws, bench)),
        area_medians: draws.area_medians(),
        area_means: draws.area_means(),
        warnings,
        error: None,
    };
    Ok((record, draws))
}

/// Joint fit: sample the model with the benchmark likelihood included
/// until the ESS floor is reached.
fn run_joint(
    data: &ClusterDataset,
    graph: &AreaGraph,
    bench: &Benchmark,
    priors: &Priors,
    cfg: &CellRunConfig,
    fit_seed: u64,
) -> Result<(MethodRecord, DrawMatrix)> {
    let scfg = sampler_cfg(cfg, fit_seed, cfg.increment_draws);
    let bench_for_build = bench.clone();
    let (out, sampler) = ess_to_target_runner(
        || {
            UnitSampler::new(
                data,
                graph,
                priors,
                Some((bench_for_build, ConstraintScale::Marginalized)),
                &scfg,
            )
        },
        &EssTarget::BulkEss(cfg.ess_target),
        cfg.increment_draws,
        cfg.max_increments,
    )?;
    let seconds = out.wall.as_secs_f64();
    let draws = out.draws;

    let acceptance = sampler.acceptance();
    let rate = if acceptance.is_empty() {
        None
    } else {
        Some(acceptance.iter().map(|c| c.overall_rate()).sum::<f64>() / acceptance.len() as f64)
    };
    let mut warnings = Vec::new();
    if !out.reached {
        warnings.push(format!(
            "increment cap hit at bulk ESS {:.1} (target {:.0})",
            out.metric, cfg.ess_target
        ));
    }
    let record = MethodRecord {
        method: Method::Joint,
        seconds,
        acceptance_rate: rate,
        bulk_ess: Some(out.metric),
        reached_target: Some(out.reached),
        n_draws: Some(draws.n_draws()),
        weighted_mean: Some(weighted_mean(&draws, bench)),
        area_medians: draws.area_medians(),
        area_means: draws.area_means(),
        warnings,
        error: None,
    };
    Ok((record, draws))
}

/// Rake the shared pool onto the benchmark; only the raking itself is
/// timed.
fn run_rake(pool: &DrawMatrix, bench: &Benchmark) -> MethodRecord {
    let start = Instant::now();
    match rake_benchmark(pool, bench) {
        Ok(r) => MethodRecord {
            method: Method::Rake,
            seconds: start.elapsed().as_secs_f64(),
            acceptance_rate: None,
            bulk_ess: min_area_bulk_ess(&r.draws).ok(),
            reached_target: None,
            n_draws: Some(r.draws.n_draws()),
            weighted_mean: Some(weighted_mean(&r.draws, bench)),
            area_medians: r.draws.area_medians(),
            area_means: r.draws.area_means(),
            warnings: r.warnings,
            error: None,
        },
        Err(e) => failed(Method::Rake, start.elapsed().as_secs_f64(), &e),
    }
}

/// Closed-form constrained estimate from the pool's area means; only the
/// solve itself is timed.
fn run_bayes(pool: &DrawMatrix, bench: &Benchmark) -> MethodRecord {
    let start = Instant::now();
    match BayesEstimateInputs::exact(pool.area_means(), bench.clone()) {
        Ok(inputs) => {
            let est = bayes_estimate(&inputs);
            let mut warnings = Vec::new();
            if !est.out_of_range.is_empty() {
                warnings.push(format!(
                    "adjusted estimates left (0, 1) in areas {:?}",
                    est.out_of_range
                ));
            }
            MethodRecord {
                method: Method::Bayes,
                seconds: start.elapsed().as_secs_f64(),
                acceptance_rate: None,
                bulk_ess: None,
                reached_target: None,
                n_draws: None,
                weighted_mean: Some(bench.weighted_sum(&est.estimates)),
                area_medians: est.estimates.clone(),
                area_means: est.estimates,
                warnings,
                error: None,
            }
        }
        Err(e) => failed(Method::Bayes, start.elapsed().as_secs_f64(), &e),
    }
}
