//! Area-level model: logit direct estimates are treated as Gaussian
//! observations of the linear predictor with their design-based
//! variances held fixed.

use crate::link::logit;
use crate::spatial::{bym2_logprior, Bym2Params, ScaledIcar};
use crate::types::DirectEstimates;

use super::priors::Priors;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Parameter state of the area-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaModelState {
    pub beta0: f64,
    pub bym2: Bym2Params,
}

impl AreaModelState {
    pub fn zeros(n_areas: usize) -> Self {
        AreaModelState {
            beta0: 0.0,
            bym2: Bym2Params::zeros(n_areas),
        }
    }

    /// Linear predictor eta_i = beta0 + b_i.
    pub fn eta(&self) -> Vec<f64> {
        self.bym2.effect().iter().map(|b| self.beta0 + b).collect()
    }
}

/// Log posterior (up to a constant) of the area-level model. Areas whose
/// direct estimate or variance is absent contribute prior only. The
/// design-based variances enter as known constants.
pub fn fh_logposterior(
    state: &AreaModelState,
    direct: &DirectEstimates,
    scaled: &ScaledIcar,
    priors: &Priors,
) -> f64 {
    assert_eq!(direct.n_areas(), scaled.n());
    if !(state.bym2.tau_b > 0.0) || !(state.bym2.phi >= 0.0 && state.bym2.phi <= 1.0) {
        return f64::NEG_INFINITY;
    }
    let eta = state.eta();
    let mut ll = 0.0;
    for (i, theta_hat, v) in direct.usable() {
        let z = logit(theta_hat).expect("usable estimates are interior") - eta[i];
        ll += -0.5 * (LN_2PI + v.ln()) - z * z / (2.0 * v);
    }
    ll + bym2_logprior(
        &state.bym2,
        scaled,
        priors.pc_u,
        priors.pc_alpha,
        priors.beta_a,
        priors.beta_b,
    ) + priors.intercept_logpdf(state.beta0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expit;
    use crate::spatial::AreaGraph;
    use crate::types::AreaDirect;
    use nalgebra::{DMatrix, DVector};

    fn direct_from(thetas: &[f64], vars: &[f64]) -> DirectEstimates {
        DirectEstimates {
            areas: thetas
                .iter()
                .zip(vars)
                .map(|(&t, &v)| {
                    Some(AreaDirect {
                        theta_hat: t,
                        logit_variance: Some(v),
                        n_clusters: 4,
                        weighted_trials: 100.0,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn zero_residuals_leave_only_the_normalizers() {
        let g = AreaGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let scaled = ScaledIcar::new(&g).unwrap();
        let priors = Priors {
            intercept: super::super::priors::InterceptPrior::Flat,
            ..Priors::default_fh()
        };
        let beta0 = -0.6;
        let state = AreaModelState {
            beta0,
            bym2: Bym2Params::zeros(3),
        };
        let vars = [0.01, 0.02, 0.05];
        let direct = direct_from(&[expit(beta0); 3], &vars);
        let lp = fh_logposterior(&state, &direct, &scaled, &priors);
        let prior_part = crate::spatial::bym2_logprior(&state.bym2, &scaled, 1.0, 0.01, 0.5, 0.5);
        let want: f64 = vars.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum();
        assert!((lp - prior_part - want).abs() < 1e-10);
    }

    #[test]
    fn likelihood_curvature_is_the_design_precision() {
        // One usable area: the second difference of the log posterior in
        // beta0 (flat intercept prior, fixed effects) is -1 / variance.
        let g = AreaGraph::from_edges(2, &[(0, 1)]).unwrap();
        let scaled = ScaledIcar::new(&g).unwrap();
        let priors = Priors {
            intercept: super::super::priors::InterceptPrior::Flat,
            ..Priors::default_fh()
        };
        let v = 0.04;
        let direct = DirectEstimates {
            areas: vec![
                Some(AreaDirect {
                    theta_hat: 0.3,
                    logit_variance: Some(v),
                    n_clusters: 3,
                    weighted_trials: 50.0,
                }),
                None,
            ],
        };
        let at = |beta0: f64| {
            let state = AreaModelState {
                beta0,
                bym2: Bym2Params::zeros(2),
            };
            fh_logposterior(&state, &direct, &scaled, &priors)
        };
        let h = 1e-4;
        let second = (at(-0.8 + h) - 2.0 * at(-0.8) + at(-0.8 - h)) / (h * h);
        assert!(
            (second + 1.0 / v).abs() < 1e-4,
            "curvature {second} vs {}",
            -1.0 / v
        );
    }

    #[test]
    fn nine_area_likelihood_matches_dense_gaussian_oracle() {
        let g = AreaGraph::south_africa_provinces();
        let scaled = ScaledIcar::new(&g).unwrap();
        let priors = Priors::default_fh();
        let thetas: Vec<f64> = (0..9).map(|i| 0.25 + 0.02 * i as f64).collect();
        let vars: Vec<f64> = (0..9).map(|i| 0.01 + 0.002 * i as f64).collect();
        let direct = direct_from(&thetas, &vars);
        let state = AreaModelState {
            beta0: -0.8,
            bym2: Bym2Params {
                tau_b: 2.0,
                phi: 0.3,
                u: (0..9).map(|i| 0.05 * (i as f64 - 4.0)).collect(),
                v: (0..9).map(|i| 0.03 * (4.0 - i as f64)).collect(),
            },
        };
        let lp = fh_logposterior(&state, &direct, &scaled, &priors);
        let prior_part = crate::spatial::bym2_logprior(&state.bym2, &scaled, 1.0, 0.01, 0.5, 0.5)
            + priors.intercept_logpdf(state.beta0);

        // Dense multivariate normal with diagonal covariance, assembled
        // and solved with general matrix routines.
        let y = DVector::from_iterator(9, thetas.iter().map(|&t| logit(t).unwrap()));
        let mu = DVector::from_vec(state.eta());
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vars.clone()));
        let chol = cov.clone().cholesky().unwrap();
        let resid = &y - &mu;
        let quad = resid.dot(&chol.solve(&resid));
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let oracle = -0.5 * (9.0 * LN_2PI + logdet + quad);
        assert!(
            (lp - prior_part - oracle).abs() < 1e-10,
            "{} vs {oracle}",
            lp - prior_part
        );
    }

    #[test]
    fn out_of_range_hypers_have_zero_density() {
        let g = AreaGraph::from_edges(2, &[(0, 1)]).unwrap();
        let scaled = ScaledIcar::new(&g).unwrap();
        let priors = Priors::default_fh();
        let direct = direct_from(&[0.3, 0.4], &[0.01, 0.01]);
        let mut state = AreaModelState::zeros(2);
        state.bym2.phi = -0.1;
        assert_eq!(
            fh_logposterior(&state, &direct, &scaled, &priors),
            f64::NEG_INFINITY
        );
    }
}
