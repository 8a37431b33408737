//! Random-walk Metropolis building blocks: acceptance bookkeeping and
//! Robbins-Monro step-size adaptation shared by every sampler block.

use rand::Rng;

/// Step-size controller for one proposal block. During warmup it nudges
/// the log step toward the target acceptance rate in windows, with a
/// gain that decays as more windows complete; [`StepAdapter::freeze`]
/// stops all movement so post-warmup kernels are time-homogeneous.
#[derive(Debug, Clone)]
pub struct StepAdapter {
    log_step: f64,
    target: f64,
    window: usize,
    acc_sum: f64,
    count: usize,
    windows_done: u64,
    frozen: bool,
}

impl StepAdapter {
    pub fn new(initial_step: f64, target: f64, window: usize) -> Self {
        assert!(initial_step > 0.0 && target > 0.0 && target < 1.0 && window >= 1);
        StepAdapter {
            log_step: initial_step.ln(),
            target,
            window,
            acc_sum: 0.0,
            count: 0,
            windows_done: 0,
            frozen: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Records one realized acceptance probability. Completing a window
    /// moves the log step by gain * (window mean - target), where the
    /// gain anneals as 2 / sqrt(windows completed).
    pub fn record(&mut self, alpha: f64) {
        if self.frozen {
            return;
        }
        self.acc_sum += if alpha.is_finite() { alpha } else { 0.0 };
        self.count += 1;
        if self.count == self.window {
            self.windows_done += 1;
            let gain = 2.0 / (self.windows_done as f64).sqrt();
            self.log_step += gain * (self.acc_sum / self.window as f64 - self.target);
            self.acc_sum = 0.0;
            self.count = 0;
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}

/// Post-warmup acceptance tallies for one proposal block.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlockTally {
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockTally {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Acceptance probability min(1, exp(delta)) for a symmetric proposal
/// with log-target difference delta; non-finite deltas reject (0).
pub fn accept_prob(delta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else if delta.is_nan() {
        0.0
    } else {
        delta.exp()
    }
}

/// One Metropolis decision: returns (accepted, realized alpha).
pub fn metropolis<R: Rng + ?Sized>(rng: &mut R, delta: f64) -> (bool, f64) {
    let alpha = accept_prob(delta);
    (rng.gen::<f64>() < alpha, alpha)
}
