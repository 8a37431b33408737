//! Metropolis-within-Gibbs sampler for the unit-level binomial model,
//! optionally with the benchmark likelihood added to the target.
//!
//! The chain moves on transformed coordinates: intercept, structured and
//! unstructured area effects, per-cluster effects, log precision of the
//! combined area effect, logit of the mixing proportion, and log cluster
//! variance. All change-of-variable terms live inside the block target,
//! so every block ratio is a plain difference of target values. Cluster
//! effects update as a scalar sweep with one shared adapted step and
//! O(1) likelihood deltas; every other block re-evaluates the target.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::link::{expit, logit};
use crate::models::{
    binom_logpmf_logit, ln_choose, softplus, ClusterVariancePrior, ConstraintScale, InterceptPrior,
    Priors,
};
use crate::spatial::{pc_precision_rate, project_zero_sum, AreaGraph, ScaledIcar};
use crate::types::{Benchmark, ClusterDataset, DrawMatrix, Internals, LinkKind, LOGISTIC_APPROX_H};

use super::kernel::{metropolis, BlockTally, StepAdapter};
use super::{ChainAcceptance, IncrementalSampler, SamplerConfig, INIT_RETRIES};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Transformed scale coordinates beyond this magnitude evaluate to
/// negative infinity; keeps exp() of half-coordinates finite.
const SCALE_COORD_LIMIT: f64 = 600.0;

const BLOCK_NAMES: [&str; 7] = [
    "beta0",
    "u",
    "v",
    "e",
    "log_tau_b",
    "logit_phi",
    "log_sigma2_e",
];
const N_BLOCKS: usize = 7;

/// Chain position on the transformed scales.
#[derive(Debug, Clone, PartialEq)]
struct Position {
    beta0: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    e: Vec<f64>,
    /// log tau_b
    t: f64,
    /// logit phi
    x: f64,
    /// log sigma2_e
    w: f64,
}

/// Quantities derived from a position that blocks reuse.
#[derive(Debug, Clone)]
struct Cache {
    /// Area effects b_i.
    b: Vec<f64>,
    /// Per-record binomial log likelihood.
    cluster_ll: Vec<f64>,
    sum_e2: f64,
    /// Full transformed-scale log target.
    target: f64,
}

/// Immutable description of the log target shared by all chains.
struct UnitTarget {
    n_areas: usize,
    area_of: Vec<usize>,
    trials: Vec<u64>,
    successes: Vec<u64>,
    lnc: Vec<f64>,
    scaled: ScaledIcar,
    priors: Priors,
    bench: Option<(Benchmark, ConstraintScale)>,
    pc_rate_tau: f64,
    ln_beta_ab: f64,
}

impl UnitTarget {
    fn new(
        data: &ClusterDataset,
        graph: &AreaGraph,
        priors: &Priors,
        bench: Option<(Benchmark, ConstraintScale)>,
    ) -> Result<Self> {
        if data.n_areas() != graph.n_areas() {
            return Err(Error::invalid(format!(
                "dataset covers {} areas but the graph has {}",
                data.n_areas(),
                graph.n_areas()
            )));
        }
        if let Some((b, _)) = &bench {
            if b.n_areas() != data.n_areas() {
                return Err(Error::invalid(format!(
                    "benchmark weights cover {} areas but the dataset has {}",
                    b.n_areas(),
                    data.n_areas()
                )));
            }
        }
        priors.validate()?;
        let scaled = ScaledIcar::new(graph)?;
        let records = data.records();
        Ok(UnitTarget {
            n_areas: data.n_areas(),
            area_of: records.iter().map(|r| r.area).collect(),
            trials: records.iter().map(|r| r.trials).collect(),
            successes: records.iter().map(|r| r.successes).collect(),
            lnc: records
                .iter()
                .map(|r| ln_choose(r.trials, r.successes))
                .collect(),
            scaled,
            priors: priors.clone(),
            bench,
            pc_rate_tau: pc_precision_rate(priors.pc_u, priors.pc_alpha),
            ln_beta_ab: ln_beta(priors.beta_a, priors.beta_b),
        })
    }

    fn n_clusters(&self) -> usize {
        self.area_of.len()
    }

    /// Area effects b = (sqrt(1-phi) v + sqrt(phi) u) / sqrt(tau_b) from
    /// the transformed coordinates.
    fn effect_into(&self, pos: &Position, out: &mut Vec<f64>) {
        let phi = expit(pos.x);
        let su = phi.sqrt();
        let sv = (1.0 - phi).sqrt();
        let scale = (-0.5 * pos.t).exp();
        out.clear();
        out.extend(
            pos.u
                .iter()
                .zip(&pos.v)
                .map(|(u, v)| scale * (sv * v + su * u)),
        );
    }

    /// Log prior of (t, x, w, beta0) on the transformed scales, all
    /// Jacobians included. Finite for all in-range finite inputs.
    fn scale_terms(&self, pos: &Position) -> f64 {
        // PC prior on tau_b = exp(t), plus the log-scale Jacobian.
        let tau_term =
            (self.pc_rate_tau / 2.0).ln() - 0.5 * pos.t - self.pc_rate_tau * (-0.5 * pos.t).exp();
        // Beta prior on phi = expit(x) plus Jacobian, in a form that
        // stays finite when expit saturates: a ln(phi) + b ln(1-phi).
        let phi_term = -self.priors.beta_a * softplus(-pos.x)
            - self.priors.beta_b * softplus(pos.x)
            - self.ln_beta_ab;
        // Cluster-variance prior on sigma2_e = exp(w) plus Jacobian.
        let sigma_term = match self.priors.cluster_variance {
            ClusterVariancePrior::Pc { u, alpha } => {
                let rate = pc_precision_rate(u, alpha);
                (rate / 2.0).ln() + 0.5 * pos.w - rate * (0.5 * pos.w).exp()
            }
            ClusterVariancePrior::GammaPrecision { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) - shape * pos.w - rate * (-pos.w).exp()
            }
        };
        let intercept_term = match self.priors.intercept {
            InterceptPrior::Flat => 0.0,
            InterceptPrior::Normal { mean, variance } => {
                let d = pos.beta0 - mean;
                -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
            }
        };
        tau_term + phi_term + sigma_term + intercept_term
    }

    /// Marginalized area prevalences implied by a position.
    fn theta(&self, pos: &Position, b: &[f64]) -> Vec<f64> {
        let scale = match self.bench {
            Some((_, ConstraintScale::Conditional)) => 1.0,
            _ => {
                let s2 = pos.w.exp();
                (1.0 + LOGISTIC_APPROX_H * LOGISTIC_APPROX_H * s2).sqrt()
            }
        };
        b.iter().map(|bi| expit((pos.beta0 + bi) / scale)).collect()
    }

    /// Prevalences on the marginalized scale regardless of the benchmark
    /// constraint scale (what the draw matrix stores).
    fn marginal_theta(&self, pos: &Position, b: &[f64]) -> Vec<f64> {
        let s2 = pos.w.exp();
        let scale = (1.0 + LOGISTIC_APPROX_H * LOGISTIC_APPROX_H * s2).sqrt();
        b.iter().map(|bi| expit((pos.beta0 + bi) / scale)).collect()
    }

    /// Full transformed-scale log target. Fills the per-record log
    /// likelihood and area-effect buffers; returns (target, sum of
    /// squared cluster effects). A guard on the scale coordinates keeps
    /// every intermediate finite.
    fn eval_into(&self, pos: &Position, ll_out: &mut Vec<f64>, b_out: &mut Vec<f64>) -> (f64, f64) {
        if pos.t.abs() > SCALE_COORD_LIMIT || pos.w.abs() > SCALE_COORD_LIMIT {
            return (f64::NEG_INFINITY, f64::NAN);
        }
        self.effect_into(pos, b_out);
        ll_out.clear();
        let mut ll_total = 0.0;
        for c in 0..self.n_clusters() {
            let eta = pos.beta0 + b_out[self.area_of[c]] + pos.e[c];
            let ll = binom_logpmf_logit(self.trials[c], self.successes[c], eta, self.lnc[c]);
            ll_out.push(ll);
            ll_total += ll;
        }
        let sum_e2: f64 = pos.e.iter().map(|e| e * e).sum();
        let n_c = pos.e.len() as f64;
        let e_prior = -0.5 * n_c * (LN_2PI + pos.w) - 0.5 * sum_e2 * (-pos.w).exp();
        let n = self.n_areas as f64;
        let u_prior = self.scaled.logpdf(&pos.u);
        let v_prior = -0.5 * n * LN_2PI - 0.5 * pos.v.iter().map(|v| v * v).sum::<f64>();
        let mut target = ll_total + e_prior + u_prior + v_prior + self.scale_terms(pos);
        if let Some((bench, _)) = &self.bench {
            if target.is_finite() {
                target += bench.loglik(&self.theta(pos, b_out));
            }
        }
        (target, sum_e2)
    }
}

/// One chain: position, cached derived state, RNG, adapters, kept draws.
struct Chain {
    id: usize,
    pos: Position,
    cache: Cache,
    rng: ChaCha12Rng,
    adapters: Vec<StepAdapter>,
    tallies: Vec<BlockTally>,
    scratch_ll: Vec<f64>,
    scratch_b: Vec<f64>,
    kept_theta: Vec<f64>,
    kept_eta: Vec<f64>,
    kept_beta0: Vec<f64>,
    kept_tau: Vec<f64>,
    kept_phi: Vec<f64>,
    kept_sigma2: Vec<f64>,
}

impl Chain {
    fn full_refresh(&mut self, tgt: &UnitTarget) {
        let (target, sum_e2) = tgt.eval_into(&self.pos, &mut self.scratch_ll, &mut self.scratch_b);
        std::mem::swap(&mut self.cache.cluster_ll, &mut self.scratch_ll);
        std::mem::swap(&mut self.cache.b, &mut self.scratch_b);
        self.cache.target = target;
        self.cache.sum_e2 = sum_e2;
    }

    /// Evaluate-decide for a block that already mutated `self.pos` in
    /// place; restores via `undo` on rejection.
    fn decide_full(&mut self, tgt: &UnitTarget, block: usize, undo: impl FnOnce(&mut Position)) {
        let (cand_target, cand_sum_e2) =
            tgt.eval_into(&self.pos, &mut self.scratch_ll, &mut self.scratch_b);
        let (acc, alpha) = metropolis(&mut self.rng, cand_target - self.cache.target);
        self.adapters[block].record(alpha);
        self.tallies[block].proposed += 1;
        if acc {
            self.tallies[block].accepted += 1;
            std::mem::swap(&mut self.cache.cluster_ll, &mut self.scratch_ll);
            std::mem::swap(&mut self.cache.b, &mut self.scratch_b);
            self.cache.target = cand_target;
            self.cache.sum_e2 = cand_sum_e2;
        } else {
            undo(&mut self.pos);
        }
    }

    fn sweep(&mut self, tgt: &UnitTarget) {
        // Intercept.
        let step = self.adapters[0].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.beta0;
        self.pos.beta0 = old + step * z;
        self.decide_full(tgt, 0, |p| p.beta0 = old);

        // Structured effect u, proposed jointly and re-projected to the
        // sum-to-zero subspace (the projection of an isotropic Gaussian
        // step is symmetric within the subspace).
        let step = self.adapters[1].step();
        let old_u = self.pos.u.clone();
        for ui in self.pos.u.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *ui += step * z;
        }
        project_zero_sum(&mut self.pos.u);
        self.decide_full(tgt, 1, move |p| p.u = old_u);

        // Unstructured effect v.
        let step = self.adapters[2].step();
        let old_v = self.pos.v.clone();
        for vi in self.pos.v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *vi += step * z;
        }
        self.decide_full(tgt, 2, move |p| p.v = old_v);

        // Cluster effects: scalar sweep with a shared step and O(1)
        // likelihood deltas. The marginalized prevalences do not depend
        // on e, so any benchmark term is unchanged.
        if !self.pos.e.is_empty() {
            let inv_2s2 = 0.5 * (-self.pos.w).exp();
            let step = self.adapters[3].step();
            for c in 0..self.pos.e.len() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                let e_old = self.pos.e[c];
                let e_new = e_old + step * z;
                let eta = self.pos.beta0 + self.cache.b[tgt.area_of[c]] + e_new;
                let ll_new = binom_logpmf_logit(tgt.trials[c], tgt.successes[c], eta, tgt.lnc[c]);
                let delta =
                    ll_new - self.cache.cluster_ll[c] - (e_new * e_new - e_old * e_old) * inv_2s2;
                let (acc, alpha) = metropolis(&mut self.rng, delta);
                self.adapters[3].record(alpha);
                self.tallies[3].proposed += 1;
                if acc {
                    self.tallies[3].accepted += 1;
                    self.pos.e[c] = e_new;
                    self.cache.sum_e2 += e_new * e_new - e_old * e_old;
                    self.cache.cluster_ll[c] = ll_new;
                    self.cache.target += delta;
                }
            }
        }

        // log tau_b.
        let step = self.adapters[4].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.t;
        self.pos.t = old + step * z;
        self.decide_full(tgt, 4, |p| p.t = old);

        // logit phi.
        let step = self.adapters[5].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.x;
        self.pos.x = old + step * z;
        self.decide_full(tgt, 5, |p| p.x = old);

        // log sigma2_e.
        let step = self.adapters[6].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.w;
        self.pos.w = old + step * z;
        self.decide_full(tgt, 6, |p| p.w = old);
    }

    fn record_draw(&mut self, tgt: &UnitTarget) {
        let theta = tgt.marginal_theta(&self.pos, &self.cache.b);
        self.kept_theta.extend_from_slice(&theta);
        self.kept_eta
            .extend(self.cache.b.iter().map(|b| self.pos.beta0 + b));
        self.kept_beta0.push(self.pos.beta0);
        self.kept_tau.push(self.pos.t.exp());
        self.kept_phi.push(expit(self.pos.x));
        self.kept_sigma2.push(self.pos.w.exp());
    }

    fn freeze(&mut self) {
        for a in &mut self.adapters {
            a.freeze();
        }
        self.tallies = vec![BlockTally::default(); N_BLOCKS];
    }
}

/// Starting position: intercept at the logit of the (shrunk) pooled
/// prevalence, effects at zero, hyperparameters at their prior medians;
/// jittered retries if the target is non-finite there.
fn initial_position(tgt: &UnitTarget, rng: &mut ChaCha12Rng) -> Result<Position> {
    let total_trials: u64 = tgt.trials.iter().sum();
    let beta0 = if total_trials > 0 {
        let total_succ: u64 = tgt.successes.iter().sum();
        let p = (total_succ as f64 + 0.5) / (total_trials as f64 + 1.0);
        logit(p)?
    } else {
        match tgt.priors.intercept {
            InterceptPrior::Normal { mean, .. } => mean,
            InterceptPrior::Flat => 0.0,
        }
    };
    let phi_med = tgt.priors.phi_median().clamp(1e-12, 1.0 - 1e-12);
    let base = Position {
        beta0,
        u: vec![0.0; tgt.n_areas],
        v: vec![0.0; tgt.n_areas],
        e: vec![0.0; tgt.n_clusters()],
        t: tgt.priors.tau_b_median().ln(),
        x: logit(phi_med)?,
        w: tgt.priors.sigma2_e_median().ln(),
    };
    let mut ll = Vec::new();
    let mut b = Vec::new();
    for attempt in 0..=INIT_RETRIES {
        let mut pos = base.clone();
        if attempt > 0 {
            let mut jitter = || -> f64 {
                let z: f64 = StandardNormal.sample(rng);
                0.1 * z
            };
            pos.beta0 += jitter();
            pos.t += jitter();
            pos.x += jitter();
            pos.w += jitter();
            for ui in pos.u.iter_mut() {
                *ui += jitter();
            }
            project_zero_sum(&mut pos.u);
            for vi in pos.v.iter_mut() {
                *vi += jitter();
            }
            for ei in pos.e.iter_mut() {
                *ei += jitter();
            }
        }
        if tgt.eval_into(&pos, &mut ll, &mut b).0.is_finite() {
            return Ok(pos);
        }
    }
    Err(Error::Initialization {
        retries: INIT_RETRIES,
    })
}

/// Adaptive Metropolis-within-Gibbs sampler for the unit-level model;
/// construction runs warmup, [`IncrementalSampler::extend`] appends
/// post-warmup draws.
pub struct UnitSampler {
    target: UnitTarget,
    chains: Vec<Chain>,
    cfg: SamplerConfig,
    draws_per_chain: usize,
}

impl UnitSampler {
    pub fn new(
        data: &ClusterDataset,
        graph: &AreaGraph,
        priors: &Priors,
        bench: Option<(Benchmark, ConstraintScale)>,
        cfg: &SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let target = UnitTarget::new(data, graph, priors, bench)?;
        if cfg.progress {
            eprintln!(
                "unit sampler: {} chains, {} warmup, {} areas, {} clusters{}",
                cfg.n_chains,
                cfg.n_warmup,
                target.n_areas,
                target.n_clusters(),
                if target.bench.is_some() {
                    " (benchmarked)"
                } else {
                    ""
                },
            );
        }
        let chains = (0..cfg.n_chains)
            .into_par_iter()
            .map(|c| -> Result<Chain> {
                let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
                rng.set_stream(c as u64);
                let pos = initial_position(&target, &mut rng)?;
                let mut chain = Chain {
                    id: c,
                    pos,
                    cache: Cache {
                        b: Vec::new(),
                        cluster_ll: Vec::new(),
                        sum_e2: 0.0,
                        target: f64::NEG_INFINITY,
                    },
                    rng,
                    adapters: vec![
                        StepAdapter::new(
                            cfg.initial_step,
                            cfg.target_accept,
                            cfg.adapt_window
                        );
                        N_BLOCKS
                    ],
                    tallies: vec![BlockTally::default(); N_BLOCKS],
                    scratch_ll: Vec::new(),
                    scratch_b: Vec::new(),
                    kept_theta: Vec::new(),
                    kept_eta: Vec::new(),
                    kept_beta0: Vec::new(),
                    kept_tau: Vec::new(),
                    kept_phi: Vec::new(),
                    kept_sigma2: Vec::new(),
                };
                chain.full_refresh(&target);
                for _ in 0..cfg.n_warmup {
                    chain.sweep(&target);
                }
                chain.freeze();
                // Restate the cached target from scratch so scalar-sweep
                // rounding drift cannot accumulate into the kept phase.
                chain.full_refresh(&target);
                Ok(chain)
            })
            .collect::<Result<Vec<_>>>()?;
        if cfg.progress {
            eprintln!("unit sampler: warmup complete");
        }
        Ok(UnitSampler {
            target,
            chains,
            cfg: cfg.clone(),
            draws_per_chain: 0,
        })
    }

    /// Post-warmup acceptance rates and frozen step sizes per chain.
    pub fn acceptance(&self) -> Vec<ChainAcceptance> {
        self.chains
            .iter()
            .map(|c| ChainAcceptance {
                chain: c.id,
                blocks: BLOCK_NAMES
                    .iter()
                    .enumerate()
                    .map(|(i, name)| (*name, c.adapters[i].step(), c.tallies[i]))
                    .collect(),
            })
            .collect()
    }

    /// Intercept draws per chain, available even when the prevalence
    /// draws cannot form a valid matrix (e.g. prior-only runs under a
    /// diffuse intercept prior, where expit saturates).
    pub fn beta0_draws(&self) -> Vec<&[f64]> {
        self.chains
            .iter()
            .map(|c| c.kept_beta0.as_slice())
            .collect()
    }
}

impl IncrementalSampler for UnitSampler {
    fn extend(&mut self, n: usize) -> Result<()> {
        let target = &self.target;
        self.chains.par_iter_mut().for_each(|chain| {
            for _ in 0..n {
                chain.sweep(target);
                chain.record_draw(target);
            }
        });
        self.draws_per_chain += n;
        if self.cfg.progress {
            eprintln!(
                "unit sampler: {} draws per chain collected",
                self.draws_per_chain
            );
        }
        Ok(())
    }

    fn draws_per_chain(&self) -> usize {
        self.draws_per_chain
    }

    fn n_chains(&self) -> usize {
        self.cfg.n_chains
    }

    fn collect(&self) -> Result<DrawMatrix> {
        if self.draws_per_chain == 0 {
            return Err(Error::invalid("no draws collected yet"));
        }
        let n = self.target.n_areas;
        let total = self.draws_per_chain * self.chains.len();
        let mut theta = Vec::with_capacity(total * n);
        let mut eta = Vec::with_capacity(total * n);
        let mut beta0 = Vec::with_capacity(total);
        let mut tau = Vec::with_capacity(total);
        let mut phi = Vec::with_capacity(total);
        let mut sigma2 = Vec::with_capacity(total);
        let mut chain_ids = Vec::with_capacity(total);
        for chain in &self.chains {
            theta.extend_from_slice(&chain.kept_theta);
            eta.extend_from_slice(&chain.kept_eta);
            beta0.extend_from_slice(&chain.kept_beta0);
            tau.extend_from_slice(&chain.kept_tau);
            phi.extend_from_slice(&chain.kept_phi);
            sigma2.extend_from_slice(&chain.kept_sigma2);
            chain_ids.extend(std::iter::repeat(chain.id).take(chain.kept_beta0.len()));
        }
        DrawMatrix::new_linked(
            n,
            chain_ids,
            theta,
            Internals {
                eta,
                beta0,
                hypers: vec![
                    ("tau_b".to_string(), tau),
                    ("phi".to_string(), phi),
                    ("sigma2_e".to_string(), sigma2),
                ],
                link: LinkKind::LogitMarginalized,
            },
        )
    }
}
