//! Metropolis-within-Gibbs sampler for the area-level model: logit
//! direct estimates are Gaussian around intercept + BYM2 effect with
//! known (delta-method) variances, optionally joint with the benchmark
//! likelihood on the expit of the linear predictor.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::link::{expit, logit};
use crate::models::{softplus, InterceptPrior, Priors};
use crate::spatial::{pc_precision_rate, project_zero_sum, AreaGraph, ScaledIcar};
use crate::types::{Benchmark, DirectEstimates, DrawMatrix, Internals, LinkKind};

use super::kernel::{metropolis, BlockTally, StepAdapter};
use super::{ChainAcceptance, IncrementalSampler, SamplerConfig, INIT_RETRIES};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const SCALE_COORD_LIMIT: f64 = 600.0;

const BLOCK_NAMES: [&str; 5] = ["beta0", "u", "v", "log_tau_b", "logit_phi"];
const N_BLOCKS: usize = 5;

/// Chain position on the transformed scales.
#[derive(Debug, Clone, PartialEq)]
struct Position {
    beta0: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    /// log tau_b
    t: f64,
    /// logit phi
    x: f64,
}

struct FhTarget {
    n_areas: usize,
    /// (area, logit direct estimate, logit-scale variance).
    usable: Vec<(usize, f64, f64)>,
    scaled: ScaledIcar,
    priors: Priors,
    bench: Option<Benchmark>,
    pc_rate_tau: f64,
    ln_beta_ab: f64,
}

impl FhTarget {
    fn new(
        direct: &DirectEstimates,
        graph: &AreaGraph,
        priors: &Priors,
        bench: Option<Benchmark>,
    ) -> Result<Self> {
        if direct.n_areas() != graph.n_areas() {
            return Err(Error::invalid(format!(
                "direct estimates cover {} areas but the graph has {}",
                direct.n_areas(),
                graph.n_areas()
            )));
        }
        if let Some(b) = &bench {
            if b.n_areas() != direct.n_areas() {
                return Err(Error::invalid(format!(
                    "benchmark weights cover {} areas but the estimates have {}",
                    b.n_areas(),
                    direct.n_areas()
                )));
            }
        }
        priors.validate()?;
        let usable = direct
            .usable()
            .map(|(i, theta_hat, vhat)| Ok((i, logit(theta_hat)?, vhat)))
            .collect::<Result<Vec<_>>>()?;
        if usable.is_empty() {
            return Err(Error::invalid(
                "area-level model needs at least one area with a usable direct estimate",
            ));
        }
        Ok(FhTarget {
            n_areas: direct.n_areas(),
            usable,
            scaled: ScaledIcar::new(graph)?,
            priors: priors.clone(),
            bench,
            pc_rate_tau: pc_precision_rate(priors.pc_u, priors.pc_alpha),
            ln_beta_ab: ln_beta(priors.beta_a, priors.beta_b),
        })
    }

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

    /// Full transformed-scale log target; fills the area-effect buffer.
    fn eval_into(&self, pos: &Position, b_out: &mut Vec<f64>) -> f64 {
        if pos.t.abs() > SCALE_COORD_LIMIT {
            return f64::NEG_INFINITY;
        }
        self.effect_into(pos, b_out);
        let mut ll = 0.0;
        for &(i, z, vhat) in &self.usable {
            let d = z - (pos.beta0 + b_out[i]);
            ll += -0.5 * (d * d / vhat + LN_2PI + vhat.ln());
        }
        let n = self.n_areas as f64;
        let u_prior = self.scaled.logpdf(&pos.u);
        let v_prior = -0.5 * n * LN_2PI - 0.5 * pos.v.iter().map(|v| v * v).sum::<f64>();
        let tau_term =
            (self.pc_rate_tau / 2.0).ln() - 0.5 * pos.t - self.pc_rate_tau * (-0.5 * pos.t).exp();
        let phi_term = -self.priors.beta_a * softplus(-pos.x)
            - self.priors.beta_b * softplus(pos.x)
            - self.ln_beta_ab;
        let intercept_term = match self.priors.intercept {
            InterceptPrior::Flat => 0.0,
            InterceptPrior::Normal { mean, variance } => {
                let d = pos.beta0 - mean;
                -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
            }
        };
        let mut target = ll + u_prior + v_prior + tau_term + phi_term + intercept_term;
        if let Some(bench) = &self.bench {
            if target.is_finite() {
                let theta: Vec<f64> = b_out.iter().map(|b| expit(pos.beta0 + b)).collect();
                target += bench.loglik(&theta);
            }
        }
        target
    }
}

struct Chain {
    id: usize,
    pos: Position,
    b: Vec<f64>,
    target_value: f64,
    rng: ChaCha12Rng,
    adapters: Vec<StepAdapter>,
    tallies: Vec<BlockTally>,
    scratch_b: Vec<f64>,
    kept_theta: Vec<f64>,
    kept_eta: Vec<f64>,
    kept_beta0: Vec<f64>,
    kept_tau: Vec<f64>,
    kept_phi: Vec<f64>,
}

impl Chain {
    fn full_refresh(&mut self, tgt: &FhTarget) {
        self.target_value = tgt.eval_into(&self.pos, &mut self.scratch_b);
        std::mem::swap(&mut self.b, &mut self.scratch_b);
    }

    fn decide(&mut self, tgt: &FhTarget, block: usize, undo: impl FnOnce(&mut Position)) {
        let cand = tgt.eval_into(&self.pos, &mut self.scratch_b);
        let (acc, alpha) = metropolis(&mut self.rng, cand - self.target_value);
        self.adapters[block].record(alpha);
        self.tallies[block].proposed += 1;
        if acc {
            self.tallies[block].accepted += 1;
            self.target_value = cand;
            std::mem::swap(&mut self.b, &mut self.scratch_b);
        } else {
            undo(&mut self.pos);
        }
    }

    fn sweep(&mut self, tgt: &FhTarget) {
        let step = self.adapters[0].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.beta0;
        self.pos.beta0 = old + step * z;
        self.decide(tgt, 0, |p| p.beta0 = old);

        let step = self.adapters[1].step();
        let old_u = self.pos.u.clone();
        for ui in self.pos.u.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *ui += step * z;
        }
        project_zero_sum(&mut self.pos.u);
        self.decide(tgt, 1, move |p| p.u = old_u);

        let step = self.adapters[2].step();
        let old_v = self.pos.v.clone();
        for vi in self.pos.v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *vi += step * z;
        }
        self.decide(tgt, 2, move |p| p.v = old_v);

        let step = self.adapters[3].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.t;
        self.pos.t = old + step * z;
        self.decide(tgt, 3, |p| p.t = old);

        let step = self.adapters[4].step();
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let old = self.pos.x;
        self.pos.x = old + step * z;
        self.decide(tgt, 4, |p| p.x = old);
    }

    fn record_draw(&mut self) {
        for b in &self.b {
            let eta = self.pos.beta0 + b;
            self.kept_eta.push(eta);
            self.kept_theta.push(expit(eta));
        }
        self.kept_beta0.push(self.pos.beta0);
        self.kept_tau.push(self.pos.t.exp());
        self.kept_phi.push(expit(self.pos.x));
    }

    fn freeze(&mut self) {
        for a in &mut self.adapters {
            a.freeze();
        }
        self.tallies = vec![BlockTally::default(); N_BLOCKS];
    }
}

fn initial_position(tgt: &FhTarget, rng: &mut ChaCha12Rng) -> Result<Position> {
    let z_mean = tgt.usable.iter().map(|(_, z, _)| z).sum::<f64>() / tgt.usable.len() as f64;
    let phi_med = tgt.priors.phi_median().clamp(1e-12, 1.0 - 1e-12);
    let base = Position {
        beta0: z_mean,
        u: vec![0.0; tgt.n_areas],
        v: vec![0.0; tgt.n_areas],
        t: tgt.priors.tau_b_median().ln(),
        x: logit(phi_med)?,
    };
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
            for ui in pos.u.iter_mut() {
                *ui += jitter();
            }
            project_zero_sum(&mut pos.u);
            for vi in pos.v.iter_mut() {
                *vi += jitter();
            }
        }
        if tgt.eval_into(&pos, &mut b).is_finite() {
            return Ok(pos);
        }
    }
    Err(Error::Initialization {
        retries: INIT_RETRIES,
    })
}

/// Adaptive Metropolis-within-Gibbs sampler for the area-level model;
/// construction runs warmup, [`IncrementalSampler::extend`] appends
/// post-warmup draws.
pub struct FhSampler {
    target: FhTarget,
    chains: Vec<Chain>,
    cfg: SamplerConfig,
    draws_per_chain: usize,
}

impl FhSampler {
    pub fn new(
        direct: &DirectEstimates,
        graph: &AreaGraph,
        priors: &Priors,
        bench: Option<Benchmark>,
        cfg: &SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let target = FhTarget::new(direct, graph, priors, bench)?;
        if cfg.progress {
            eprintln!(
                "area-level sampler: {} chains, {} warmup, {} usable of {} areas{}",
                cfg.n_chains,
                cfg.n_warmup,
                target.usable.len(),
                target.n_areas,
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
                    b: Vec::new(),
                    target_value: f64::NEG_INFINITY,
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
                    scratch_b: Vec::new(),
                    kept_theta: Vec::new(),
                    kept_eta: Vec::new(),
                    kept_beta0: Vec::new(),
                    kept_tau: Vec::new(),
                    kept_phi: Vec::new(),
                };
                chain.full_refresh(&target);
                for _ in 0..cfg.n_warmup {
                    chain.sweep(&target);
                }
                chain.freeze();
                chain.full_refresh(&target);
                Ok(chain)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FhSampler {
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
}

impl IncrementalSampler for FhSampler {
    fn extend(&mut self, n: usize) -> Result<()> {
        let target = &self.target;
        self.chains.par_iter_mut().for_each(|chain| {
            for _ in 0..n {
                chain.sweep(target);
                chain.record_draw();
            }
        });
        self.draws_per_chain += n;
        if self.cfg.progress {
            eprintln!(
                "area-level sampler: {} draws per chain collected",
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
        let mut chain_ids = Vec::with_capacity(total);
        for chain in &self.chains {
            theta.extend_from_slice(&chain.kept_theta);
            eta.extend_from_slice(&chain.kept_eta);
            beta0.extend_from_slice(&chain.kept_beta0);
            tau.extend_from_slice(&chain.kept_tau);
            phi.extend_from_slice(&chain.kept_phi);
            chain_ids.extend(std::iter::repeat(chain.id).take(chain.kept_beta0.len()));
        }
        DrawMatrix::new_linked(
            n,
            chain_ids,
            theta,
            Internals {
                eta,
                beta0,
                hypers: vec![("tau_b".to_string(), tau), ("phi".to_string(), phi)],
                link: LinkKind::Logit,
            },
        )
    }
}
