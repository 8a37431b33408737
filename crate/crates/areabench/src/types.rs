//! Shared domain types: benchmark specification, cluster survey data,
//! design-based direct estimates, and posterior draw matrices.

use crate::error::{Error, Result};
use crate::link::expit;

/// Tolerance for "sums to one" checks on weight vectors.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tolerance used when re-deriving theta from stored internals.
const LINK_RECOMPUTE_TOL: f64 = 1e-10;

/// Logistic-normal approximation constant h = 16 sqrt(3) / (15 pi),
/// used when converting a cluster-level logistic model to an area-level
/// probability by integrating out a Gaussian cluster effect:
/// theta = expit(eta / sqrt(1 + h^2 sigma2)). The literal is the value
/// of the expression rounded to f64 (verified by test).
pub const LOGISTIC_APPROX_H: f64 = 0.5880841551165782;

/// A national-level benchmark: noisy weighted total of the area prevalences.
///
/// The benchmark likelihood is y2 | theta ~ N(sum_i w_i theta_i, sigma2_y2).
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    y2: f64,
    sigma2_y2: f64,
    weights: Vec<f64>,
}

impl Benchmark {
    /// Validates: y2 in (0,1), sigma2_y2 strictly positive, weights
    /// nonnegative and summing to one within 1e-12.
    pub fn new(y2: f64, sigma2_y2: f64, weights: Vec<f64>) -> Result<Self> {
        if !(y2 > 0.0 && y2 < 1.0) {
            return Err(Error::invalid(format!(
                "benchmark value {y2} not in (0, 1)"
            )));
        }
        if !(sigma2_y2 > 0.0) {
            return Err(Error::invalid(format!(
                "benchmark variance must be positive, got {sigma2_y2}"
            )));
        }
        if weights.is_empty() {
            return Err(Error::invalid("benchmark weights are empty"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("benchmark weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "benchmark weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(Benchmark {
            y2,
            sigma2_y2,
            weights,
        })
    }

    /// Equal weights over `n` areas.
    pub fn equal_weights(y2: f64, sigma2_y2: f64, n: usize) -> Result<Self> {
        Benchmark::new(y2, sigma2_y2, vec![1.0 / n as f64; n])
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn sigma2_y2(&self) -> f64 {
        self.sigma2_y2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_areas(&self) -> usize {
        self.weights.len()
    }

    /// Weighted total sum_i w_i theta_i of one draw of area prevalences.
    pub fn weighted_sum(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.weights.len(), "theta length mismatch");
        self.weights.iter().zip(theta).map(|(w, t)| w * t).sum()
    }

    /// Benchmark log likelihood at one draw:
    /// -(sum w theta - y2)^2 / (2 sigma2) - log(2 pi sigma2) / 2.
    ///
    /// Maximized exactly when the weighted total hits the benchmark.
    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let d = self.weighted_sum(theta) - self.y2;
        -d * d / (2.0 * self.sigma2_y2) - 0.5 * (2.0 * std::f64::consts::PI * self.sigma2_y2).ln()
    }

    /// Per-draw rejection acceptance probability exp(-(sum w theta - y2)^2 / (2 sigma2)).
    pub fn acceptance_prob(&self, theta: &[f64]) -> f64 {
        let d = self.weighted_sum(theta) - self.y2;
        (-d * d / (2.0 * self.sigma2_y2)).exp()
    }
}

/// One surveyed cluster: all trials in one area with a common outcome count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterRecord {
    pub area: usize,
    pub trials: u64,
    pub successes: u64,
}

/// Cluster-level binomial survey data over a fixed set of areas.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDataset {
    n_areas: usize,
    records: Vec<ClusterRecord>,
}

impl ClusterDataset {
    /// Validates: at least one record, every area id in range, trials
    /// positive, successes within trials.
    pub fn new(n_areas: usize, records: Vec<ClusterRecord>) -> Result<Self> {
        if n_areas == 0 {
            return Err(Error::invalid("dataset needs at least one area"));
        }
        if records.is_empty() {
            return Err(Error::invalid("dataset needs at least one record"));
        }
        for (k, r) in records.iter().enumerate() {
            if r.area >= n_areas {
                return Err(Error::invalid(format!(
                    "record {k}: area id {} out of range (n_areas = {n_areas})",
                    r.area
                )));
            }
            if r.trials == 0 {
                return Err(Error::invalid(format!("record {k}: zero trials")));
            }
            if r.successes > r.trials {
                return Err(Error::invalid(format!(
                    "record {k}: successes {} exceed trials {}",
                    r.successes, r.trials
                )));
            }
        }
        Ok(ClusterDataset { n_areas, records })
    }

    /// A dataset with no records, for prior-only sampler runs.
    pub fn empty(n_areas: usize) -> Self {
        ClusterDataset {
            n_areas,
            records: Vec::new(),
        }
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn records(&self) -> &[ClusterRecord] {
        &self.records
    }

    /// Pooled prevalence sum(y) / sum(n) over all records.
    pub fn pooled_prevalence(&self) -> Option<f64> {
        let trials: u64 = self.records.iter().map(|r| r.trials).sum();
        if trials == 0 {
            return None;
        }
        let successes: u64 = self.records.iter().map(|r| r.successes).sum();
        Some(successes as f64 / trials as f64)
    }
}

/// Design-based direct estimate for one area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaDirect {
    /// Weighted prevalence estimate, strictly inside (0, 1).
    pub theta_hat: f64,
    /// Delta-method variance of logit(theta_hat); absent when the
    /// between-cluster variance is not estimable (fewer than two
    /// clusters, or zero residual spread).
    pub logit_variance: Option<f64>,
    /// Number of clusters behind the estimate.
    pub n_clusters: usize,
    /// Weighted trial total, retained for audit.
    pub weighted_trials: f64,
}

/// Per-area direct estimates; degenerate areas (prevalence 0 or 1, or no
/// data) are flagged absent rather than imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectEstimates {
    pub areas: Vec<Option<AreaDirect>>,
}

impl DirectEstimates {
    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    /// Areas carrying both an estimate and a logit-scale variance, i.e.
    /// those usable as Gaussian observations in an area-level model.
    pub fn usable(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.areas.iter().enumerate().filter_map(|(i, a)| {
            a.as_ref()
                .and_then(|a| a.logit_variance.map(|v| (i, a.theta_hat, v)))
        })
    }
}

/// How the theta columns of a draw matrix derive from the stored
/// linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LinkKind {
    /// theta_i = expit(eta_i).
    Logit,
    /// theta_i = expit(eta_i / sqrt(1 + h^2 sigma2_e)): cluster-effect
    /// marginalization of a unit-level model; requires a "sigma2_e"
    /// hyperparameter column.
    LogitMarginalized,
}

/// Model internals aligned with the theta rows of a [`DrawMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct Internals {
    /// Linear predictor per draw and area, row-major (n_draws x n_areas).
    pub eta: Vec<f64>,
    /// Intercept per draw.
    pub beta0: Vec<f64>,
    /// Named hyperparameter columns, each of length n_draws.
    pub hypers: Vec<(String, Vec<f64>)>,
    /// Link relating eta (and hypers) to theta.
    pub link: LinkKind,
}

impl Internals {
    pub fn hyper(&self, name: &str) -> Option<&[f64]> {
        self.hypers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Posterior draws of area prevalences, with optional aligned internals.
///
/// Rows are draws, grouped by chain (chain ids nondecreasing, contiguous
/// from zero). When internals are present, theta is a deterministic
/// function of them, and every theta lies strictly inside (0, 1); draw
/// transformations (raking, projection) drop the internals because the
/// link no longer holds.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    n_areas: usize,
    chain_ids: Vec<usize>,
    /// Row-major (n_draws x n_areas).
    theta: Vec<f64>,
    internals: Option<Internals>,
}

impl DrawMatrix {
    /// Sampler output: theta strictly in (0, 1) and re-derivable from the
    /// internals (checked here by recomputation).
    pub fn new_linked(
        n_areas: usize,
        chain_ids: Vec<usize>,
        theta: Vec<f64>,
        internals: Internals,
    ) -> Result<Self> {
        let m = DrawMatrix {
            n_areas,
            chain_ids,
            theta,
            internals: Some(internals),
        };
        m.validate()?;
        Ok(m)
    }

    /// Transformed draws with no generating internals; requires finite
    /// theta and valid chain grouping only.
    pub fn new_unlinked(n_areas: usize, chain_ids: Vec<usize>, theta: Vec<f64>) -> Result<Self> {
        let m = DrawMatrix {
            n_areas,
            chain_ids,
            theta,
            internals: None,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.n_areas == 0 {
            return Err(Error::invalid("draw matrix needs at least one area"));
        }
        let k = self.chain_ids.len();
        if k == 0 {
            return Err(Error::invalid("draw matrix needs at least one draw"));
        }
        if self.theta.len() != k * self.n_areas {
            return Err(Error::invalid(format!(
                "theta length {} does not match {k} draws x {} areas",
                self.theta.len(),
                self.n_areas
            )));
        }
        // Chains: contiguous blocks labelled 0, 1, 2, ... in order.
        let mut expected_next = 0usize;
        let mut prev = None;
        for &c in &self.chain_ids {
            match prev {
                None => {
                    if c != 0 {
                        return Err(Error::invalid("chain ids must start at 0"));
                    }
                    expected_next = 1;
                }
                Some(p) => {
                    if c == p {
                        // same chain
                    } else if c == expected_next {
                        expected_next += 1;
                    } else {
                        return Err(Error::invalid(format!(
                            "chain ids must be contiguous nondecreasing; saw {c} after {p}"
                        )));
                    }
                }
            }
            prev = Some(c);
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite theta draw"));
        }
        if let Some(internals) = &self.internals {
            if self.theta.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(Error::invalid("linked theta draw outside (0, 1)"));
            }
            if internals.eta.len() != self.theta.len() {
                return Err(Error::invalid("eta length does not match theta"));
            }
            if internals.beta0.len() != k {
                return Err(Error::invalid("beta0 length does not match draw count"));
            }
            for (name, col) in &internals.hypers {
                if col.len() != k {
                    return Err(Error::invalid(format!(
                        "hyperparameter column {name} has wrong length"
                    )));
                }
            }
            let s2e = match internals.link {
                LinkKind::Logit => None,
                LinkKind::LogitMarginalized => {
                    Some(internals.hyper("sigma2_e").ok_or_else(|| {
                        Error::invalid("marginalized link needs a sigma2_e hyperparameter column")
                    })?)
                }
            };
            for row in 0..k {
                let shrink = match s2e {
                    None => 1.0,
                    Some(col) => (1.0 + LOGISTIC_APPROX_H * LOGISTIC_APPROX_H * col[row]).sqrt(),
                };
                for a in 0..self.n_areas {
                    let idx = row * self.n_areas + a;
                    let derived = expit(internals.eta[idx] / shrink);
                    if (derived - self.theta[idx]).abs() > LINK_RECOMPUTE_TOL {
                        return Err(Error::invalid(format!(
                            "theta[{row}][{a}] = {} does not match link of internals ({derived})",
                            self.theta[idx]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_draws(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chain_ids.last().map_or(0, |c| c + 1)
    }

    pub fn chain_ids(&self) -> &[usize] {
        &self.chain_ids
    }

    pub fn internals(&self) -> Option<&Internals> {
        self.internals.as_ref()
    }

    pub fn theta_row(&self, draw: usize) -> &[f64] {
        &self.theta[draw * self.n_areas..(draw + 1) * self.n_areas]
    }

    pub fn theta_flat(&self) -> &[f64] {
        &self.theta
    }

    /// All draws of one area, in draw order.
    pub fn area_draws(&self, area: usize) -> Vec<f64> {
        assert!(area < self.n_areas);
        (0..self.n_draws())
            .map(|k| self.theta[k * self.n_areas + area])
            .collect()
    }

    /// Draws of one area grouped by chain.
    pub fn area_chains(&self, area: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (k, &c) in self.chain_ids.iter().enumerate() {
            out[c].push(self.theta[k * self.n_areas + area]);
        }
        out
    }

    /// Weighted total per draw under the given weights.
    pub fn weighted_sums(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.n_areas);
        (0..self.n_draws())
            .map(|k| {
                self.theta_row(k)
                    .iter()
                    .zip(weights)
                    .map(|(t, w)| t * w)
                    .sum()
            })
            .collect()
    }

    pub fn area_mean(&self, area: usize) -> f64 {
        let d = self.area_draws(area);
        d.iter().sum::<f64>() / d.len() as f64
    }

    /// Type-7 (linear interpolation) quantile of one area's draws.
    pub fn area_quantile(&self, area: usize, q: f64) -> f64 {
        quantile_type7(&mut self.area_draws(area), q)
    }

    pub fn area_median(&self, area: usize) -> f64 {
        self.area_quantile(area, 0.5)
    }

    pub fn area_medians(&self) -> Vec<f64> {
        (0..self.n_areas).map(|i| self.area_median(i)).collect()
    }

    pub fn area_means(&self) -> Vec<f64> {
        (0..self.n_areas).map(|i| self.area_mean(i)).collect()
    }

    /// Equal-tailed credible interval from the draws.
    pub fn interval(&self, area: usize, alpha: f64) -> (f64, f64) {
        assert!(alpha > 0.0 && alpha < 1.0);
        let mut d = self.area_draws(area);
        let lo = quantile_type7(&mut d, alpha / 2.0);
        let hi = quantile_type7(&mut d, 1.0 - alpha / 2.0);
        (lo, hi)
    }

    /// Subset of rows (e.g. rejection-accepted draws). Internals are
    /// carried along; the subset is relabelled as a single chain because
    /// the original chain structure no longer partitions it.
    pub fn subset(&self, rows: &[usize]) -> Result<DrawMatrix> {
        if rows.is_empty() {
            return Err(Error::invalid("empty row subset"));
        }
        let n = self.n_areas;
        let mut theta = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            assert!(r < self.n_draws());
            theta.extend_from_slice(self.theta_row(r));
        }
        let internals = self.internals.as_ref().map(|i| Internals {
            eta: rows
                .iter()
                .flat_map(|&r| i.eta[r * n..(r + 1) * n].iter().copied())
                .collect(),
            beta0: rows.iter().map(|&r| i.beta0[r]).collect(),
            hypers: i
                .hypers
                .iter()
                .map(|(name, col)| (name.clone(), rows.iter().map(|&r| col[r]).collect()))
                .collect(),
            link: i.link,
        });
        let m = DrawMatrix {
            n_areas: n,
            chain_ids: vec![0; rows.len()],
            theta,
            internals,
        };
        m.validate()?;
        Ok(m)
    }

    /// Re-materialize rows (with repetition allowed) into a new matrix
    /// whose chain structure is given by `rows_per_chain`: output chain c
    /// consists of the listed source rows in order. Internals are carried
    /// along. Used by resampling methods whose output is a sequence of
    /// revisited source draws.
    pub fn gather_chains(&self, rows_per_chain: &[Vec<usize>]) -> Result<DrawMatrix> {
        let total: usize = rows_per_chain.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(Error::invalid("empty row gather"));
        }
        let n = self.n_areas;
        let mut theta = Vec::with_capacity(total * n);
        let mut chain_ids = Vec::with_capacity(total);
        for (c, rows) in rows_per_chain.iter().enumerate() {
            for &r in rows {
                assert!(r < self.n_draws());
                theta.extend_from_slice(self.theta_row(r));
                chain_ids.push(c);
            }
        }
        let internals = self.internals.as_ref().map(|i| {
            let all = rows_per_chain.iter().flatten().copied();
            Internals {
                eta: all
                    .clone()
                    .flat_map(|r| i.eta[r * n..(r + 1) * n].iter().copied())
                    .collect(),
                beta0: all.clone().map(|r| i.beta0[r]).collect(),
                hypers: i
                    .hypers
                    .iter()
                    .map(|(name, col)| (name.clone(), all.clone().map(|r| col[r]).collect()))
                    .collect(),
                link: i.link,
            }
        });
        let m = DrawMatrix {
            n_areas: n,
            chain_ids,
            theta,
            internals,
        };
        m.validate()?;
        Ok(m)
    }

    /// Apply a per-row transformation to theta, dropping internals.
    pub fn map_theta(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<DrawMatrix> {
        let mut theta = Vec::with_capacity(self.theta.len());
        for k in 0..self.n_draws() {
            let row = f(k, self.theta_row(k));
            assert_eq!(row.len(), self.n_areas);
            theta.extend_from_slice(&row);
        }
        DrawMatrix::new_unlinked(self.n_areas, self.chain_ids.clone(), theta)
    }
}

/// Type-7 sample quantile (sorts its scratch argument in place).
pub fn quantile_type7(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    assert!((0.0..=1.0).contains(&q));
    values.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        values[n - 1]
    } else {
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

/// Which benchmarking method produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    /// Exact or inexact moment-matching adjustment of point estimates.
    Bayes,
    /// Draw-level application of the exact adjustment.
    Project,
    /// Raking of draws to the benchmark total.
    Rake,
    /// Rejection sampling against the benchmark likelihood.
    Rejection,
    /// Independence Metropolis-Hastings over intercept-shifted draws.
    Mh,
    /// Joint MCMC with the benchmark likelihood in the posterior.
    Joint,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Bayes => "bayes",
            Method::Project => "project",
            Method::Rake => "rake",
            Method::Rejection => "rejection",
            Method::Mh => "mh",
            Method::Joint => "joint",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(Method::Bayes),
            "project" => Ok(Method::Project),
            "rake" => Ok(Method::Rake),
            "rejection" => Ok(Method::Rejection),
            "mh" => Ok(Method::Mh),
            "joint" => Ok(Method::Joint),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Benchmarked draws plus bookkeeping from the method that produced them.
#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub method: Method,
    pub draws: DrawMatrix,
    /// Fraction of considered draws accepted (rejection) or of proposals
    /// adopted (MH); absent for deterministic transformations.
    pub acceptance_rate: Option<f64>,
    /// Rows whose transformed values left (0, 1) (projection only).
    pub flagged_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::logit;

    fn unit_theta(n: usize, k: usize) -> Vec<f64> {
        (0..n * k)
            .map(|i| 0.2 + 0.6 * (i as f64 / (n * k) as f64))
            .collect()
    }

    #[test]
    fn benchmark_rejects_bad_inputs() {
        assert!(Benchmark::new(0.0, 0.01, vec![1.0]).is_err());
        assert!(Benchmark::new(1.0, 0.01, vec![1.0]).is_err());
        assert!(
            Benchmark::new(0.3, 0.0, vec![1.0]).is_err(),
            "zero variance must be rejected"
        );
        assert!(Benchmark::new(0.3, -1.0, vec![1.0]).is_err());
        assert!(
            Benchmark::new(0.3, 0.01, vec![0.5, 0.6]).is_err(),
            "weights must sum to 1"
        );
        assert!(
            Benchmark::new(0.3, 0.01, vec![1.5, -0.5]).is_err(),
            "negative weight"
        );
        assert!(Benchmark::new(0.3, 0.01, vec![0.25; 4]).is_ok());
    }

    #[test]
    fn loglik_normalizer_at_zero_deviation() {
        // Weighted total equal to y2: log density is just the Gaussian normalizer.
        let b = Benchmark::equal_weights(0.3, 0.04, 2).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 0.04).ln();
        assert_eq!(b.loglik(&[0.25, 0.35]), expected);
    }

    #[test]
    fn loglik_one_sigma_deviation() {
        let sigma2 = 0.0025;
        let b = Benchmark::new(0.3, sigma2, vec![1.0]).unwrap();
        let theta = [0.3 + sigma2.sqrt()];
        let expected = -0.5 - 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
        assert!((b.loglik(&theta) - expected).abs() < 1e-15);
        assert!((b.acceptance_prob(&theta) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn loglik_spread_example() {
        // Nine areas at 0.28..0.36, equal weights: total is 0.32, so a
        // benchmark of 0.29 with variance 0.01 sits 0.03 away.
        let theta: Vec<f64> = (0..9).map(|i| 0.28 + 0.01 * i as f64).collect();
        let b = Benchmark::equal_weights(0.29, 0.01, 9).unwrap();
        let expected = -0.045 - 0.5 * (2.0 * std::f64::consts::PI * 0.01).ln();
        assert!((b.loglik(&theta) - expected).abs() < 1e-12);
    }

    #[test]
    fn loglik_is_maximized_on_the_constraint() {
        let b = Benchmark::equal_weights(0.32, 0.01, 3).unwrap();
        let on = [0.30, 0.32, 0.34];
        assert!((b.weighted_sum(&on) - 0.32).abs() < 1e-15);
        let at = b.loglik(&on);
        for d in [-0.05, -0.01, 0.01, 0.05] {
            let off = [0.30 + d, 0.32 + d, 0.34 + d];
            assert!(b.loglik(&off) < at);
        }
    }

    #[test]
    fn dataset_validation() {
        let ok = ClusterDataset::new(
            2,
            vec![
                ClusterRecord {
                    area: 0,
                    trials: 10,
                    successes: 5,
                },
                ClusterRecord {
                    area: 1,
                    trials: 20,
                    successes: 0,
                },
            ],
        );
        assert!(ok.is_ok());
        assert!(ClusterDataset::new(2, vec![]).is_err(), "no records");
        assert!(
            ClusterDataset::new(
                1,
                vec![ClusterRecord {
                    area: 1,
                    trials: 5,
                    successes: 1
                }]
            )
            .is_err(),
            "area out of range"
        );
        assert!(
            ClusterDataset::new(
                1,
                vec![ClusterRecord {
                    area: 0,
                    trials: 0,
                    successes: 0
                }]
            )
            .is_err(),
            "zero trials"
        );
        assert!(
            ClusterDataset::new(
                1,
                vec![ClusterRecord {
                    area: 0,
                    trials: 5,
                    successes: 6
                }]
            )
            .is_err(),
            "successes beyond trials"
        );
    }

    #[test]
    fn pooled_prevalence() {
        let d = ClusterDataset::new(
            2,
            vec![
                ClusterRecord {
                    area: 0,
                    trials: 30,
                    successes: 6,
                },
                ClusterRecord {
                    area: 1,
                    trials: 70,
                    successes: 21,
                },
            ],
        )
        .unwrap();
        assert_eq!(d.pooled_prevalence().unwrap(), 0.27);
        assert_eq!(ClusterDataset::empty(3).pooled_prevalence(), None);
    }

    #[test]
    fn draw_matrix_link_recomputation_accepts_consistent_rows() {
        let n = 3;
        let eta = vec![-0.5, 0.0, 0.5, -1.0, 0.2, 0.9];
        let theta: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let m = DrawMatrix::new_linked(
            n,
            vec![0, 0],
            theta,
            Internals {
                eta,
                beta0: vec![0.0, 0.1],
                hypers: vec![("tau_b".into(), vec![1.0, 2.0])],
                link: LinkKind::Logit,
            },
        );
        assert!(m.is_ok());
    }

    #[test]
    fn draw_matrix_link_recomputation_rejects_mismatch() {
        let eta = vec![0.0, 0.0];
        let m = DrawMatrix::new_linked(
            2,
            vec![0],
            vec![0.5, 0.51],
            Internals {
                eta,
                beta0: vec![0.0],
                hypers: vec![],
                link: LinkKind::Logit,
            },
        );
        assert!(m.is_err());
    }

    #[test]
    fn marginalized_link_uses_sigma2_e() {
        let s2 = 0.8;
        let eta = vec![0.4, -0.7];
        let shrink = (1.0 + LOGISTIC_APPROX_H * LOGISTIC_APPROX_H * s2).sqrt();
        let theta: Vec<f64> = eta.iter().map(|&e| expit(e / shrink)).collect();
        let m = DrawMatrix::new_linked(
            2,
            vec![0],
            theta,
            Internals {
                eta,
                beta0: vec![0.0],
                hypers: vec![("sigma2_e".into(), vec![s2])],
                link: LinkKind::LogitMarginalized,
            },
        );
        assert!(m.is_ok());
        // Without the hyperparameter column the link cannot be checked.
        let m2 = DrawMatrix::new_linked(
            1,
            vec![0],
            vec![0.5],
            Internals {
                eta: vec![0.0],
                beta0: vec![0.0],
                hypers: vec![],
                link: LinkKind::LogitMarginalized,
            },
        );
        assert!(m2.is_err());
    }

    #[test]
    fn chain_ids_must_be_contiguous_blocks() {
        let t = unit_theta(1, 4);
        assert!(DrawMatrix::new_unlinked(1, vec![0, 0, 1, 1], t.clone()).is_ok());
        assert!(DrawMatrix::new_unlinked(1, vec![1, 1, 0, 0], t.clone()).is_err());
        assert!(DrawMatrix::new_unlinked(1, vec![0, 2, 2, 2], t.clone()).is_err());
        assert!(DrawMatrix::new_unlinked(1, vec![0, 1, 0, 1], t).is_err());
    }

    #[test]
    fn quantiles_and_medians() {
        let theta = vec![0.1, 0.2, 0.3, 0.4]; // one area, four draws
        let m = DrawMatrix::new_unlinked(1, vec![0; 4], theta).unwrap();
        // Even count: median is the average of the two middle order stats.
        assert!((m.area_median(0) - 0.25).abs() < 1e-15);
        assert_eq!(m.area_quantile(0, 0.0), 0.1);
        assert_eq!(m.area_quantile(0, 1.0), 0.4);
        let (lo, hi) = m.interval(0, 0.5);
        assert!(lo < m.area_median(0) && m.area_median(0) < hi);
    }

    #[test]
    fn subset_relabels_and_keeps_internals() {
        let eta = vec![-0.2, 0.1, 0.3, 0.6, -0.9, 1.2];
        let theta: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let m = DrawMatrix::new_linked(
            2,
            vec![0, 0, 1],
            theta,
            Internals {
                eta,
                beta0: vec![0.0, 0.5, -0.5],
                hypers: vec![("phi".into(), vec![0.1, 0.2, 0.3])],
                link: LinkKind::Logit,
            },
        )
        .unwrap();
        let s = m.subset(&[2, 0]).unwrap();
        assert_eq!(s.n_draws(), 2);
        assert_eq!(s.chain_ids(), &[0, 0]);
        assert_eq!(s.theta_row(0), m.theta_row(2));
        assert_eq!(s.internals().unwrap().beta0, vec![-0.5, 0.0]);
        assert_eq!(s.internals().unwrap().hyper("phi").unwrap(), &[0.3, 0.1]);
    }

    #[test]
    fn weighted_sums_match_benchmark_weighting() {
        let theta = vec![0.2, 0.4, 0.3, 0.5];
        let m = DrawMatrix::new_unlinked(2, vec![0, 0], theta).unwrap();
        let s = m.weighted_sums(&[0.5, 0.5]);
        assert_eq!(s, vec![0.30000000000000004, 0.4]);
    }

    #[test]
    fn logistic_approx_constant_matches_its_definition() {
        let computed = 16.0 * 3.0_f64.sqrt() / (15.0 * std::f64::consts::PI);
        assert_eq!(LOGISTIC_APPROX_H, computed);
        assert!(
            (LOGISTIC_APPROX_H - 0.588084155117).abs() < 5e-13,
            "first 12 digits"
        );
    }

    #[test]
    fn logit_consistency_of_stored_weights() {
        // Guard against accidental reordering: logit is strictly monotone.
        let probs = [0.28, 0.29, 0.3];
        let mut prev = f64::NEG_INFINITY;
        for p in probs {
            let l = logit(p).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }
}
