//! Prior configuration shared by the unit-level and area-level models,
//! with a plain-text `key = value` config format.

use statrs::distribution::{Beta, ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::spatial::{pc_precision_logpdf, pc_precision_rate};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Prior on the model intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterceptPrior {
    /// Improper flat prior; required by the independence MH construction,
    /// whose acceptance ratio assumes the unadjusted intercept is flat.
    Flat,
    Normal {
        mean: f64,
        variance: f64,
    },
}

/// Prior on the cluster-effect variance sigma2_e of the unit model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterVariancePrior {
    /// Penalized-complexity prior on the precision: P(sigma_e > u) = alpha.
    Pc { u: f64, alpha: f64 },
    /// Gamma(shape, rate) prior on the precision 1/sigma2_e (a log-gamma
    /// prior on the log precision).
    GammaPrecision { shape: f64, rate: f64 },
}

/// Full prior configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    /// PC prior scale for the BYM2 precision tau_b: P(1/sqrt(tau_b) > pc_u) = pc_alpha.
    pub pc_u: f64,
    pub pc_alpha: f64,
    /// Beta prior on the BYM2 mixing proportion phi.
    pub beta_a: f64,
    pub beta_b: f64,
    pub intercept: InterceptPrior,
    pub cluster_variance: ClusterVariancePrior,
    /// Variance of the shifted intercept prior used when fitting the
    /// adjusted model behind the independence MH benchmarker.
    pub sigma_plus2: f64,
}

impl Priors {
    /// Defaults for the unit-level model: flat intercept (so the MH
    /// benchmarker's acceptance ratio is exact), PC priors on both
    /// precisions, Beta(1/2, 1/2) mixing.
    pub fn default_unit() -> Self {
        Priors {
            pc_u: 1.0,
            pc_alpha: 0.01,
            beta_a: 0.5,
            beta_b: 0.5,
            intercept: InterceptPrior::Flat,
            cluster_variance: ClusterVariancePrior::Pc {
                u: 1.0,
                alpha: 0.01,
            },
            sigma_plus2: 1.0 / 0.001,
        }
    }

    /// Defaults for the area-level model: a vague normal intercept.
    pub fn default_fh() -> Self {
        Priors {
            intercept: InterceptPrior::Normal {
                mean: 0.0,
                variance: 1.0 / 0.001,
            },
            ..Priors::default_unit()
        }
    }

    /// Log density of the intercept prior (zero for the flat prior).
    pub fn intercept_logpdf(&self, beta0: f64) -> f64 {
        match self.intercept {
            InterceptPrior::Flat => 0.0,
            InterceptPrior::Normal { mean, variance } => {
                let d = beta0 - mean;
                -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
            }
        }
    }

    /// Derivative of [`Priors::intercept_logpdf`] with respect to beta0.
    pub fn intercept_grad(&self, beta0: f64) -> f64 {
        match self.intercept {
            InterceptPrior::Flat => 0.0,
            InterceptPrior::Normal { mean, variance } => -(beta0 - mean) / variance,
        }
    }

    /// Log density of the cluster-variance prior as a density over
    /// sigma2_e (the coordinate the unit-model state stores), i.e. with
    /// the change-of-variables from the precision folded in.
    pub fn cluster_variance_logpdf(&self, sigma2: f64) -> f64 {
        if !(sigma2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self.cluster_variance {
            ClusterVariancePrior::Pc { u, alpha } => {
                // PC density over tau = 1/s, times |d tau / d s| = 1/s^2:
                // (rate/2) s^(-1/2) exp(-rate sqrt(s)).
                let rate = pc_precision_rate(u, alpha);
                pc_precision_logpdf(1.0 / sigma2, rate) - 2.0 * sigma2.ln()
            }
            ClusterVariancePrior::GammaPrecision { shape, rate } => {
                // Inverse-gamma density over s.
                shape * rate.ln()
                    - statrs::function::gamma::ln_gamma(shape)
                    - (shape + 1.0) * sigma2.ln()
                    - rate / sigma2
            }
        }
    }

    /// Derivative of [`Priors::cluster_variance_logpdf`] wrt sigma2.
    pub fn cluster_variance_grad(&self, sigma2: f64) -> f64 {
        match self.cluster_variance {
            ClusterVariancePrior::Pc { u, alpha } => {
                let rate = pc_precision_rate(u, alpha);
                -0.5 / sigma2 - 0.5 * rate / sigma2.sqrt()
            }
            ClusterVariancePrior::GammaPrecision { shape, rate } => {
                -(shape + 1.0) / sigma2 + rate / (sigma2 * sigma2)
            }
        }
    }

    /// Prior median of tau_b, used to initialize chains away from
    /// density singularities.
    pub fn tau_b_median(&self) -> f64 {
        let rate = pc_precision_rate(self.pc_u, self.pc_alpha);
        let sigma_med = std::f64::consts::LN_2 / rate;
        1.0 / (sigma_med * sigma_med)
    }

    /// Prior median of phi.
    pub fn phi_median(&self) -> f64 {
        if self.beta_a == self.beta_b {
            // Symmetric Beta: the median is exactly 1/2, and the numeric
            // inverse CDF would only approximate it.
            return 0.5;
        }
        Beta::new(self.beta_a, self.beta_b)
            .expect("valid Beta shapes")
            .inverse_cdf(0.5)
    }

    /// Prior median of sigma2_e.
    pub fn sigma2_e_median(&self) -> f64 {
        match self.cluster_variance {
            ClusterVariancePrior::Pc { u, alpha } => {
                let rate = pc_precision_rate(u, alpha);
                let sigma_med = std::f64::consts::LN_2 / rate;
                sigma_med * sigma_med
            }
            ClusterVariancePrior::GammaPrecision { shape, rate } => {
                let tau_med = Gamma::new(shape, rate)
                    .expect("valid Gamma parameters")
                    .inverse_cdf(0.5);
                1.0 / tau_med
            }
        }
    }

    /// Applies `key = value` lines to this configuration. Lines that are
    /// blank or start with `#` are skipped; unknown keys are errors.
    ///
    /// Keys: pc_U, pc_alpha, beta_a, beta_b, sigma_plus2,
    /// intercept_prior (flat|normal), intercept_mean, intercept_variance,
    /// cluster_prior (pc|gamma), cluster_pc_U, cluster_pc_alpha,
    /// cluster_gamma_shape, cluster_gamma_rate.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    "priors config",
                    format!("line {}: expected key = value", line_no + 1),
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64> {
                value.parse().map_err(|_| {
                    Error::parse(
                        "priors config",
                        format!("line {}: bad number {value:?} for {key}", line_no + 1),
                    )
                })
            };
            match key {
                "pc_U" => self.pc_u = num()?,
                "pc_alpha" => self.pc_alpha = num()?,
                "beta_a" => self.beta_a = num()?,
                "beta_b" => self.beta_b = num()?,
                "sigma_plus2" => self.sigma_plus2 = num()?,
                "intercept_prior" => match value {
                    "flat" => self.intercept = InterceptPrior::Flat,
                    "normal" => {
                        if !matches!(self.intercept, InterceptPrior::Normal { .. }) {
                            self.intercept = InterceptPrior::Normal {
                                mean: 0.0,
                                variance: 1.0 / 0.001,
                            };
                        }
                    }
                    other => {
                        return Err(Error::parse(
                            "priors config",
                            format!(
                                "line {}: intercept_prior {other:?} is not flat|normal",
                                line_no + 1
                            ),
                        ))
                    }
                },
                "intercept_mean" => match &mut self.intercept {
                    InterceptPrior::Normal { mean, .. } => *mean = num()?,
                    InterceptPrior::Flat => {
                        self.intercept = InterceptPrior::Normal {
                            mean: num()?,
                            variance: 1.0 / 0.001,
                        }
                    }
                },
                "intercept_variance" => match &mut self.intercept {
                    InterceptPrior::Normal { variance, .. } => *variance = num()?,
                    InterceptPrior::Flat => {
                        self.intercept = InterceptPrior::Normal {
                            mean: 0.0,
                            variance: num()?,
                        }
                    }
                },
                "cluster_prior" => match value {
                    "pc" => {
                        if !matches!(self.cluster_variance, ClusterVariancePrior::Pc { .. }) {
                            self.cluster_variance = ClusterVariancePrior::Pc {
                                u: 1.0,
                                alpha: 0.01,
                            };
                        }
                    }
                    "gamma" => {
                        if !matches!(
                            self.cluster_variance,
                            ClusterVariancePrior::GammaPrecision { .. }
                        ) {
                            self.cluster_variance = ClusterVariancePrior::GammaPrecision {
                                shape: 0.1,
                                rate: 0.1,
                            };
                        }
                    }
                    other => {
                        return Err(Error::parse(
                            "priors config",
                            format!(
                                "line {}: cluster_prior {other:?} is not pc|gamma",
                                line_no + 1
                            ),
                        ))
                    }
                },
                "cluster_pc_U" => match &mut self.cluster_variance {
                    ClusterVariancePrior::Pc { u, .. } => *u = num()?,
                    _ => {
                        self.cluster_variance = ClusterVariancePrior::Pc {
                            u: num()?,
                            alpha: 0.01,
                        }
                    }
                },
                "cluster_pc_alpha" => match &mut self.cluster_variance {
                    ClusterVariancePrior::Pc { alpha, .. } => *alpha = num()?,
                    _ => {
                        self.cluster_variance = ClusterVariancePrior::Pc {
                            u: 1.0,
                            alpha: num()?,
                        }
                    }
                },
                "cluster_gamma_shape" => match &mut self.cluster_variance {
                    ClusterVariancePrior::GammaPrecision { shape, .. } => *shape = num()?,
                    _ => {
                        self.cluster_variance = ClusterVariancePrior::GammaPrecision {
                            shape: num()?,
                            rate: 0.1,
                        }
                    }
                },
                "cluster_gamma_rate" => match &mut self.cluster_variance {
                    ClusterVariancePrior::GammaPrecision { rate, .. } => *rate = num()?,
                    _ => {
                        self.cluster_variance = ClusterVariancePrior::GammaPrecision {
                            shape: 0.1,
                            rate: num()?,
                        }
                    }
                },
                other => {
                    return Err(Error::parse(
                        "priors config",
                        format!("line {}: unknown key {other:?}", line_no + 1),
                    ))
                }
            }
        }
        self.validate()
    }

    /// Checks shape and scale parameters for positivity and, for the
    /// normal intercept prior, a positive variance.
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("pc_U", self.pc_u),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("sigma_plus2", self.sigma_plus2),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(Error::invalid(format!(
                    "prior parameter {name} must be positive"
                )));
            }
        }
        if !(self.pc_alpha > 0.0 && self.pc_alpha < 1.0) {
            return Err(Error::invalid("pc_alpha must lie in (0, 1)"));
        }
        match self.cluster_variance {
            ClusterVariancePrior::Pc { u, alpha } => {
                if !(u > 0.0 && alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::invalid(
                        "cluster PC prior needs u > 0, alpha in (0, 1)",
                    ));
                }
            }
            ClusterVariancePrior::GammaPrecision { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0) {
                    return Err(Error::invalid(
                        "cluster Gamma prior needs positive shape and rate",
                    ));
                }
            }
        }
        if let InterceptPrior::Normal { variance, .. } = self.intercept {
            if !(variance > 0.0) {
                return Err(Error::invalid("intercept prior variance must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_differ_only_in_intercept() {
        let u = Priors::default_unit();
        let f = Priors::default_fh();
        assert_eq!(u.intercept, InterceptPrior::Flat);
        assert_eq!(
            f.intercept,
            InterceptPrior::Normal {
                mean: 0.0,
                variance: 1000.0
            }
        );
        assert_eq!(u.pc_u, f.pc_u);
        assert_eq!(u.sigma_plus2, 1000.0);
    }

    #[test]
    fn cluster_variance_density_normalizes() {
        // Quadrature over log sigma2 for both prior families.
        for prior in [
            ClusterVariancePrior::Pc {
                u: 1.0,
                alpha: 0.01,
            },
            ClusterVariancePrior::GammaPrecision {
                shape: 0.1,
                rate: 0.1,
            },
        ] {
            let p = Priors {
                cluster_variance: prior,
                ..Priors::default_unit()
            };
            let f = |t: f64| {
                let s = t.exp();
                p.cluster_variance_logpdf(s).exp() * s
            };
            // The Gamma(0.1, .) precision prior puts a very slow s^{-1.1}
            // tail on sigma2, so the upper limit must reach far out in log
            // space before the residual mass drops below the tolerance.
            let (lo, hi, steps) = (-70.0, 280.0, 1_750_000);
            let h = (hi - lo) / steps as f64;
            let mut total = 0.5 * (f(lo) + f(hi));
            for k in 1..steps {
                total += f(lo + k as f64 * h);
            }
            total *= h;
            assert!(
                (total - 1.0).abs() < 1e-5,
                "{prior:?} integrates to {total}"
            );
        }
    }

    #[test]
    fn cluster_variance_gradient_matches_finite_differences() {
        for prior in [
            ClusterVariancePrior::Pc {
                u: 1.0,
                alpha: 0.01,
            },
            ClusterVariancePrior::GammaPrecision {
                shape: 0.1,
                rate: 0.1,
            },
        ] {
            let p = Priors {
                cluster_variance: prior,
                ..Priors::default_unit()
            };
            for s in [0.1, 0.5, 1.0, 3.0] {
                let h = 1e-6 * s;
                let fd = (p.cluster_variance_logpdf(s + h) - p.cluster_variance_logpdf(s - h))
                    / (2.0 * h);
                let g = p.cluster_variance_grad(s);
                assert!(
                    (fd - g).abs() / g.abs().max(1.0) < 1e-6,
                    "{prior:?} at {s}: {g} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn medians_sit_at_half_mass() {
        let p = Priors::default_unit();
        // PC prior on tau_b: median of sigma is ln2/rate, tau the inverse square.
        let rate = pc_precision_rate(1.0, 0.01);
        let tau_med = p.tau_b_median();
        assert!((1.0 / tau_med.sqrt() - std::f64::consts::LN_2 / rate).abs() < 1e-12);
        assert!((p.phi_median() - 0.5).abs() < 1e-9, "symmetric Beta median");
        // Gamma(0.1, 0.1) precision: CDF at the returned median is 1/2.
        let p2 = Priors {
            cluster_variance: ClusterVariancePrior::GammaPrecision {
                shape: 0.1,
                rate: 0.1,
            },
            ..Priors::default_unit()
        };
        let tau = 1.0 / p2.sigma2_e_median();
        let cdf = Gamma::new(0.1, 0.1).unwrap().cdf(tau);
        assert!((cdf - 0.5).abs() < 1e-8);
    }

    #[test]
    fn config_parsing_applies_and_validates() {
        let mut p = Priors::default_unit();
        p.apply_config(
            "# comment\n\
             pc_U = 2.0\n\
             pc_alpha = 0.05\n\
             beta_a = 1.0\n\
             intercept_prior = normal\n\
             intercept_mean = -0.9\n\
             intercept_variance = 0.25\n\
             cluster_prior = gamma\n\
             cluster_gamma_shape = 0.1\n\
             cluster_gamma_rate = 0.1\n\
             sigma_plus2 = 0.316\n",
        )
        .unwrap();
        assert_eq!(p.pc_u, 2.0);
        assert_eq!(p.pc_alpha, 0.05);
        assert_eq!(
            p.intercept,
            InterceptPrior::Normal {
                mean: -0.9,
                variance: 0.25
            }
        );
        assert_eq!(
            p.cluster_variance,
            ClusterVariancePrior::GammaPrecision {
                shape: 0.1,
                rate: 0.1
            }
        );
        assert_eq!(p.sigma_plus2, 0.316);

        let mut q = Priors::default_unit();
        assert!(q.apply_config("nonsense_key = 1\n").is_err());
        assert!(
            q.apply_config("pc_alpha = 2.0\n").is_err(),
            "alpha outside (0,1)"
        );
        assert!(q.apply_config("pc_U\n").is_err(), "missing =");
    }

    #[test]
    fn intercept_prior_terms() {
        let flat = Priors::default_unit();
        assert_eq!(flat.intercept_logpdf(123.0), 0.0);
        assert_eq!(flat.intercept_grad(123.0), 0.0);
        let normal = Priors::default_fh();
        // N(0, 1000) log density at 0 is -(1/2) log(2 pi 1000).
        let want = -0.5 * (2.0 * std::f64::consts::PI * 1000.0).ln();
        assert!((normal.intercept_logpdf(0.0) - want).abs() < 1e-12);
        assert!((normal.intercept_grad(10.0) + 0.01).abs() < 1e-15);
    }
}
