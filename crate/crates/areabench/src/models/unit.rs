//! Unit-level model: cluster counts are binomial with a logit link on
//! intercept + BYM2 area effect + iid Gaussian cluster effect. Area
//! prevalences come from integrating the cluster effect out with the
//! logistic-normal approximation.

use crate::link::expit;
use crate::spatial::{bym2_logprior, pc_precision_rate, Bym2Params, ScaledIcar};
use crate::types::{ClusterDataset, LOGISTIC_APPROX_H};

use super::priors::Priors;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Full parameter state of the unit-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitModelState {
    pub beta0: f64,
    pub bym2: Bym2Params,
    /// One effect per dataset record, in record order.
    pub cluster_effects: Vec<f64>,
    pub sigma2_e: f64,
}

impl UnitModelState {
    pub fn zeros(n_areas: usize, n_clusters: usize) -> Self {
        UnitModelState {
            beta0: 0.0,
            bym2: Bym2Params::zeros(n_areas),
            cluster_effects: vec![0.0; n_clusters],
            sigma2_e: 1.0,
        }
    }
}

/// log(n choose k) via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// log(1 + exp(t)) without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Binomial log-pmf with eta on the logit scale:
/// y log(expit(eta)) + (n-y) log(expit(-eta)) + log(n choose y).
pub(crate) fn binom_logpmf_logit(n: u64, y: u64, eta: f64, lnc: f64) -> f64 {
    -(y as f64) * softplus(-eta) - ((n - y) as f64) * softplus(eta) + lnc
}

/// Log posterior (up to a constant) of the unit-level model: binomial
/// likelihood over clusters, BYM2 prior, iid N(0, sigma2_e) prior on the
/// cluster effects, the configured priors on sigma2_e and the intercept.
/// Non-finite for sigma2_e <= 0 or out-of-range BYM2 hypers.
pub fn unit_logposterior(
    state: &UnitModelState,
    data: &ClusterDataset,
    scaled: &ScaledIcar,
    priors: &Priors,
) -> f64 {
    assert_eq!(state.cluster_effects.len(), data.records().len());
    if !(state.sigma2_e > 0.0)
        || !(state.bym2.tau_b > 0.0)
        || !(state.bym2.phi >= 0.0 && state.bym2.phi <= 1.0)
    {
        return f64::NEG_INFINITY;
    }
    let b = state.bym2.effect();
    let mut ll = 0.0;
    for (r, e) in data.records().iter().zip(&state.cluster_effects) {
        let eta = state.beta0 + b[r.area] + e;
        ll += binom_logpmf_logit(r.trials, r.successes, eta, ln_choose(r.trials, r.successes));
    }
    let c = state.cluster_effects.len() as f64;
    let sum_e2: f64 = state.cluster_effects.iter().map(|e| e * e).sum();
    let lp_e = -0.5 * c * (LN_2PI + state.sigma2_e.ln()) - sum_e2 / (2.0 * state.sigma2_e);
    ll + lp_e
        + bym2_logprior(
            &state.bym2,
            scaled,
            priors.pc_u,
            priors.pc_alpha,
            priors.beta_a,
            priors.beta_b,
        )
        + priors.cluster_variance_logpdf(state.sigma2_e)
        + priors.intercept_logpdf(state.beta0)
}

/// Area-level prevalence implied by a unit-model state: the cluster
/// effect is integrated out with the logistic-normal approximation,
/// theta_i = expit((beta0 + b_i) / sqrt(1 + h^2 sigma2_e)).
pub fn unit_area_prediction(state: &UnitModelState) -> Vec<f64> {
    let shrink = (1.0 + LOGISTIC_APPROX_H * LOGISTIC_APPROX_H * state.sigma2_e).sqrt();
    state
        .bym2
        .effect()
        .iter()
        .map(|b| expit((state.beta0 + b) / shrink))
        .collect()
}

/// Gradient of [`unit_logposterior`] in the natural coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrad {
    pub beta0: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub cluster_effects: Vec<f64>,
    pub tau_b: f64,
    pub phi: f64,
    pub sigma2_e: f64,
}

/// Analytic gradient of the unit-model log posterior at an interior
/// state (tau_b > 0, phi strictly inside (0, 1), sigma2_e > 0).
pub fn unit_logposterior_grad(
    state: &UnitModelState,
    data: &ClusterDataset,
    scaled: &ScaledIcar,
    priors: &Priors,
) -> UnitGrad {
    let n = scaled.n();
    assert!(
        state.bym2.phi > 0.0 && state.bym2.phi < 1.0,
        "gradient needs interior phi"
    );
    assert!(state.bym2.tau_b > 0.0 && state.sigma2_e > 0.0);
    let tau = state.bym2.tau_b;
    let phi = state.bym2.phi;
    let s2 = state.sigma2_e;
    let sqrt_tau = tau.sqrt();
    let su = phi.sqrt();
    let sv = (1.0 - phi).sqrt();
    let b = state.bym2.effect();

    // Per-area sums of the binomial score y - n * expit(eta).
    let mut score = vec![0.0; n];
    let mut grad_e = Vec::with_capacity(state.cluster_effects.len());
    for (r, e) in data.records().iter().zip(&state.cluster_effects) {
        let eta = state.beta0 + b[r.area] + e;
        let g = r.successes as f64 - r.trials as f64 * expit(eta);
        score[r.area] += g;
        grad_e.push(g - e / s2);
    }
    let total_score: f64 = score.iter().sum();

    let qu = scaled.icar().mat_vec(&state.bym2.u);
    let grad_u: Vec<f64> = (0..n)
        .map(|i| su / sqrt_tau * score[i] - scaled.kappa() * qu[i])
        .collect();
    let grad_v: Vec<f64> = (0..n)
        .map(|i| sv / sqrt_tau * score[i] - state.bym2.v[i])
        .collect();

    // d b_i / d tau = -b_i / (2 tau); PC prior adds -3/(2 tau) + rate/(2 tau^(3/2)).
    let rate = pc_precision_rate(priors.pc_u, priors.pc_alpha);
    let grad_tau = -(0..n).map(|i| score[i] * b[i]).sum::<f64>() / (2.0 * tau) - 1.5 / tau
        + 0.5 * rate / (tau * sqrt_tau);

    // d b_i / d phi = (u_i / (2 su) - v_i / (2 sv)) / sqrt(tau).
    let grad_phi_lik: f64 = (0..n)
        .map(|i| {
            score[i] * (state.bym2.u[i] / (2.0 * su) - state.bym2.v[i] / (2.0 * sv)) / sqrt_tau
        })
        .sum();
    let grad_phi = grad_phi_lik + (priors.beta_a - 1.0) / phi - (priors.beta_b - 1.0) / (1.0 - phi);

    let c = state.cluster_effects.len() as f64;
    let sum_e2: f64 = state.cluster_effects.iter().map(|e| e * e).sum();
    let grad_s2 = -0.5 * c / s2 + sum_e2 / (2.0 * s2 * s2) + priors.cluster_variance_grad(s2);

    UnitGrad {
        beta0: total_score + priors.intercept_grad(state.beta0),
        u: grad_u,
        v: grad_v,
        cluster_effects: grad_e,
        tau_b: grad_tau,
        phi: grad_phi,
        sigma2_e: grad_s2,
    }
}
