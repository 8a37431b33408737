//! BYM2 spatial random effect: a structured intrinsic-CAR component,
//! scaled so its generalized marginal variance is one, mixed with an
//! unstructured iid component through a proportion phi and an overall
//! precision tau_b. Hyperpriors: a penalized-complexity prior on tau_b
//! and a Beta prior on phi.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::graph::AreaGraph;
use super::icar::IcarPrecision;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Rate of the penalized-complexity prior on a precision, from its
/// definition P(1/sqrt(tau) > u) = alpha: rate = -ln(alpha) / u.
pub fn pc_precision_rate(u: f64, alpha: f64) -> f64 {
    assert!(
        u > 0.0 && alpha > 0.0 && alpha < 1.0,
        "need u > 0, alpha in (0,1)"
    );
    -alpha.ln() / u
}

/// Log density of the PC precision prior
/// pi(tau) = (rate/2) tau^(-3/2) exp(-rate / sqrt(tau)); -inf for tau <= 0.
pub fn pc_precision_logpdf(tau: f64, rate: f64) -> f64 {
    if !(tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    (rate / 2.0).ln() - 1.5 * tau.ln() - rate / tau.sqrt()
}

/// Log density of Beta(a, b); -inf outside [0, 1]. At the endpoints the
/// formula's limit is returned (infinite for shape parameters below one).
pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x >= 0.0 && x <= 1.0) {
        return f64::NEG_INFINITY;
    }
    let mut out = -statrs::function::beta::ln_beta(a, b);
    if a != 1.0 {
        out += (a - 1.0) * x.ln();
    }
    if b != 1.0 {
        out += (b - 1.0) * (1.0 - x).ln();
    }
    out
}

/// Subtracts the mean, projecting onto the sum-to-zero subspace.
pub fn project_zero_sum(u: &mut [f64]) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    for x in u.iter_mut() {
        *x -= mean;
    }
}

/// The intrinsic CAR precision of a graph together with the scaling
/// constant kappa that gives the effect a unit generalized variance:
/// kappa is the geometric mean of the diagonal of the constrained
/// generalized inverse of Q, so the scaled precision is kappa * Q.
///
/// Construction runs one dense eigendecomposition and caches everything
/// the samplers need: the log pseudo-determinant normalizer, the
/// marginal variances, and the spectral basis for exact prior sampling.
#[derive(Debug, Clone)]
pub struct ScaledIcar {
    icar: IcarPrecision,
    kappa: f64,
    /// log pseudo-determinant term: (1/2) sum log(kappa lambda_k) over
    /// nonzero eigenvalues, minus (n-1)/2 log(2 pi).
    log_normalizer: f64,
    /// Diagonal of the generalized inverse of kappa Q (geometric mean 1).
    marginal_variances: Vec<f64>,
    /// Nonzero eigenpairs (lambda_k, v_k) of the unscaled Q.
    spectrum: Vec<(f64, Vec<f64>)>,
}

impl ScaledIcar {
    pub fn new(graph: &AreaGraph) -> Result<Self> {
        let n = graph.n_areas();
        if n < 2 {
            return Err(Error::invalid("scaled ICAR needs at least two areas"));
        }
        let icar = IcarPrecision::from_graph(graph);
        let eig = icar.to_dense().symmetric_eigen();
        let max_l = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-9 * max_l.max(1.0);

        let mut spectrum = Vec::new();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() >= tol {
                let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                spectrum.push((l, col));
            }
        }
        if spectrum.len() != n - 1 {
            return Err(Error::invalid(format!(
                "Laplacian rank {} instead of {} (graph must be connected)",
                spectrum.len(),
                n - 1
            )));
        }

        // diag of the generalized inverse of Q: sum_k v_ik^2 / lambda_k.
        let mut diag_pinv = vec![0.0; n];
        for (l, v) in &spectrum {
            for i in 0..n {
                diag_pinv[i] += v[i] * v[i] / l;
            }
        }
        let kappa = (diag_pinv.iter().map(|d| d.ln()).sum::<f64>() / n as f64).exp();
        let log_normalizer = 0.5 * spectrum.iter().map(|(l, _)| (kappa * l).ln()).sum::<f64>()
            - 0.5 * (n - 1) as f64 * LN_2PI;
        let marginal_variances = diag_pinv.iter().map(|d| d / kappa).collect();

        Ok(ScaledIcar {
            icar,
            kappa,
            log_normalizer,
            marginal_variances,
            spectrum,
        })
    }

    pub fn n(&self) -> usize {
        self.icar.n()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn icar(&self) -> &IcarPrecision {
        &self.icar
    }

    /// Marginal variances of the scaled effect (geometric mean one).
    pub fn marginal_variances(&self) -> &[f64] {
        &self.marginal_variances
    }

    /// Log density of the scaled ICAR on its sum-to-zero subspace,
    /// with respect to (n-1)-dimensional Lebesgue measure there.
    pub fn logpdf(&self, u: &[f64]) -> f64 {
        self.log_normalizer - 0.5 * self.kappa * self.icar.quad_form(u)
    }

    /// Gradient of [`ScaledIcar::logpdf`]: -kappa * Q u.
    pub fn grad_logpdf(&self, u: &[f64]) -> Vec<f64> {
        self.icar
            .mat_vec(u)
            .into_iter()
            .map(|x| -self.kappa * x)
            .collect()
    }

    /// Exact draw from the scaled ICAR via its spectral basis; the
    /// result sums to zero up to rounding.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut u = vec![0.0; self.n()];
        for (l, v) in &self.spectrum {
            let z: f64 = StandardNormal.sample(rng);
            let scale = z / (self.kappa * l).sqrt();
            for i in 0..u.len() {
                u[i] += scale * v[i];
            }
        }
        u
    }
}

/// BYM2 random-effect state: overall precision, mixing proportion, the
/// structured (scaled-ICAR) component u, and the unstructured iid
/// standard-normal component v.
#[derive(Debug, Clone, PartialEq)]
pub struct Bym2Params {
    pub tau_b: f64,
    pub phi: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Bym2Params {
    /// Neutral starting state: unit precision, balanced mixing, zero effects.
    pub fn zeros(n: usize) -> Self {
        Bym2Params {
            tau_b: 1.0,
            phi: 0.5,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Composed area effect b = (sqrt(1-phi) v + sqrt(phi) u) / sqrt(tau_b).
    pub fn effect(&self) -> Vec<f64> {
        assert!(self.tau_b > 0.0 && (0.0..=1.0).contains(&self.phi));
        let su = self.phi.sqrt();
        let sv = (1.0 - self.phi).sqrt();
        let scale = 1.0 / self.tau_b.sqrt();
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| scale * (sv * v + su * u))
            .collect()
    }
}

/// Joint log prior of the BYM2 state: scaled-ICAR density on u, standard
/// normal density on v, PC prior on tau_b with P(1/sqrt(tau_b) > pc_u) =
/// pc_alpha, and Beta(beta_a, beta_b) on phi. Returns -inf for tau_b <= 0
/// or phi outside [0, 1].
pub fn bym2_logprior(
    params: &Bym2Params,
    scaled: &ScaledIcar,
    pc_u: f64,
    pc_alpha: f64,
    beta_a: f64,
    beta_b: f64,
) -> f64 {
    if !(params.tau_b > 0.0) || !(params.phi >= 0.0 && params.phi <= 1.0) {
        return f64::NEG_INFINITY;
    }
    let n = scaled.n() as f64;
    let lp_u = scaled.logpdf(&params.u);
    let lp_v = -0.5 * n * LN_2PI - 0.5 * params.v.iter().map(|v| v * v).sum::<f64>();
    let lp_tau = pc_precision_logpdf(params.tau_b, pc_precision_rate(pc_u, pc_alpha));
    let lp_phi = beta_logpdf(params.phi, beta_a, beta_b);
    lp_u + lp_v + lp_tau + lp_phi
}
