//! Moment-matching adjustment of point estimates, and its draw-level
//! projection.
//!
//! Given unbenchmarked point estimates `theta_b`, positive loss weights
//! `phi`, and a benchmark with weights `w` and value `y2`, the adjusted
//! estimates minimize the weighted squared loss `sum_i phi_i (theta_i -
//! theta_b_i)^2`, with the weighted-total constraint `sum_i w_i theta_i =
//! y2` imposed either exactly or as a squared penalty with multiplier
//! `lambda`. Both cases have the closed form
//!
//! ```text
//! theta_b + (s + 1/lambda)^{-1} (y2 - sum_i w_i theta_b_i) r,
//! r_i = w_i / phi_i,   s = sum_i w_i^2 / phi_i,
//! ```
//!
//! with `1/lambda = 0` in the exact case. [`project_draws`] applies the
//! exact map to every draw of a [`DrawMatrix`], which makes each draw
//! satisfy the constraint identically.

use crate::error::{Error, Result};
use crate::types::{Benchmark, BenchmarkResult, DrawMatrix, Method};

/// Inputs to the moment-matching adjustment: unbenchmarked point
/// estimates, per-area loss weights, the benchmark, and the constraint
/// penalty `lambda` (`f64::INFINITY` selects the exact, hard-constraint
/// adjustment).
///
/// The derived quantities `r` and `s` are recomputed from the stored
/// weights on every use rather than cached, so they can never go stale.
#[derive(Debug, Clone)]
pub struct BayesEstimateInputs {
    theta_b: Vec<f64>,
    loss_weights: Vec<f64>,
    bench: Benchmark,
    lambda: f64,
}

impl BayesEstimateInputs {
    /// Unit loss weights. `lambda` must be positive; `f64::INFINITY`
    /// means exact.
    pub fn new(theta_b: Vec<f64>, bench: Benchmark, lambda: f64) -> Result<Self> {
        let n = bench.n_areas();
        BayesEstimateInputs::with_loss_weights(theta_b, vec![1.0; n], bench, lambda)
    }

    /// Exact adjustment with unit loss weights.
    pub fn exact(theta_b: Vec<f64>, bench: Benchmark) -> Result<Self> {
        BayesEstimateInputs::new(theta_b, bench, f64::INFINITY)
    }

    pub fn with_loss_weights(
        theta_b: Vec<f64>,
        loss_weights: Vec<f64>,
        bench: Benchmark,
        lambda: f64,
    ) -> Result<Self> {
        let n = bench.n_areas();
        if theta_b.len() != n {
            return Err(Error::invalid(format!(
                "{} point estimates for {n} benchmark areas",
                theta_b.len()
            )));
        }
        if loss_weights.len() != n {
            return Err(Error::invalid(format!(
                "{} loss weights for {n} benchmark areas",
                loss_weights.len()
            )));
        }
        if theta_b.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("point estimates must be finite"));
        }
        if loss_weights.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and positive"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "constraint penalty must be positive (or +inf for exact), got {lambda}"
            )));
        }
        Ok(BayesEstimateInputs {
            theta_b,
            loss_weights,
            bench,
            lambda,
        })
    }

    pub fn theta_b(&self) -> &[f64] {
        &self.theta_b
    }

    pub fn loss_weights(&self) -> &[f64] {
        &self.loss_weights
    }

    pub fn bench(&self) -> &Benchmark {
        &self.bench
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_exact(&self) -> bool {
        self.lambda.is_infinite()
    }

    /// Adjustment direction r_i = w_i / phi_i and curvature
    /// s = sum_i w_i^2 / phi_i, recomputed on demand.
    fn r_and_s(&self) -> (Vec<f64>, f64) {
        let w = self.bench.weights();
        let r: Vec<f64> = w
            .iter()
            .zip(&self.loss_weights)
            .map(|(wi, pi)| wi / pi)
            .collect();
        let s = w.iter().zip(&r).map(|(wi, ri)| wi * ri).sum();
        (r, s)
    }
}

/// Adjusted point estimates, with the areas whose estimate left (0, 1).
///
/// Out-of-range estimates are returned as computed and flagged rather
/// than rejected: the adjustment is a known deficiency of moment
/// matching near the boundary, and the caller decides what to do.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates {
    pub estimates: Vec<f64>,
    pub out_of_range: Vec<usize>,
}

/// Moment-matching adjustment of the point estimates in `inputs`.
///
/// With `lambda = +inf` the output satisfies the benchmark constraint
/// exactly; finite `lambda` trades constraint error against distance
/// from the unbenchmarked estimates, approaching them as `lambda -> 0`
/// and the exact adjustment as `lambda -> +inf`.
pub fn bayes_estimate(inputs: &BayesEstimateInputs) -> PointEstimates {
    let (r, s) = inputs.r_and_s();
    // 1/lambda is exactly zero for the +inf (exact) case.
    let shift = (inputs.bench.y2() - inputs.bench.weighted_sum(&inputs.theta_b))
        / (s + inputs.lambda.recip());
    let estimates: Vec<f64> = inputs
        .theta_b
        .iter()
        .zip(&r)
        .map(|(t, ri)| t + shift * ri)
        .collect();
    let out_of_range = estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| !(**e > 0.0 && **e < 1.0))
        .map(|(i, _)| i)
        .collect();
    PointEstimates {
        estimates,
        out_of_range,
    }
}

/// Apply the exact adjustment row by row, so every draw satisfies the
/// benchmark constraint identically.
///
/// Only the exact (`lambda = +inf`) adjustment is a projection onto the
/// constraint set; a finite `lambda` is rejected. The point estimates in
/// `inputs` play no role here — each draw stands in for them. Rows with
/// any projected value outside (0, 1) are flagged, not dropped, and the
/// result carries no internals because the projected draws are no longer
/// a function of any model state.
pub fn project_draws(draws: &DrawMatrix, inputs: &BayesEstimateInputs) -> Result<BenchmarkResult> {
    if !inputs.is_exact() {
        return Err(Error::invalid(format!(
            "draw projection requires the exact adjustment (lambda = +inf), got lambda = {}",
            inputs.lambda
        )));
    }
    if draws.n_areas() != inputs.bench.n_areas() {
        return Err(Error::invalid(format!(
            "draws cover {} areas, benchmark {}",
            draws.n_areas(),
            inputs.bench.n_areas()
        )));
    }
    let (r, s) = inputs.r_and_s();
    let mut flagged_rows = Vec::new();
    let projected = draws.map_theta(|row_idx, row| {
        let shift = (inputs.bench.y2() - inputs.bench.weighted_sum(row)) / s;
        let out: Vec<f64> = row.iter().zip(&r).map(|(t, ri)| t + shift * ri).collect();
        if out.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            flagged_rows.push(row_idx);
        }
        out
    })?;
    let warnings = if flagged_rows.is_empty() {
        vec![]
    } else {
        vec![format!(
            "{} of {} projected draws left (0, 1)",
            flagged_rows.len(),
            draws.n_draws()
        )]
    };
    Ok(BenchmarkResult {
        method: Method::Project,
        draws: projected,
        acceptance_rate: None,
        flagged_rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Solve the hard-constrained problem from its KKT system with a
    /// dense LU factorization: stationarity rows 2 phi_i (theta_i -
    /// theta_b_i) + mu w_i = 0 plus the constraint row.
    fn kkt_oracle(theta_b: &[f64], phi: &[f64], bench: &Benchmark) -> Vec<f64> {
        let n = theta_b.len();
        let w = bench.weights();
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            a[(i, i)] = 2.0 * phi[i];
            a[(i, n)] = w[i];
            a[(n, i)] = w[i];
            rhs[i] = 2.0 * phi[i] * theta_b[i];
        }
        rhs[n] = bench.y2();
        let sol = a.lu().solve(&rhs).expect("singular KKT system");
        sol.rows(0, n).iter().copied().collect()
    }

    /// Solve the penalized problem from its normal equations
    /// (diag(phi) + lambda w w^T) theta = phi .* theta_b + lambda y2 w.
    fn penalized_oracle(theta_b: &[f64], phi: &[f64], bench: &Benchmark, lambda: f64) -> Vec<f64> {
        let n = theta_b.len();
        let w = bench.weights();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = lambda * w[i] * w[j];
            }
            a[(i, i)] += phi[i];
            rhs[i] = phi[i] * theta_b[i] + lambda * bench.y2() * w[i];
        }
        let sol = a.lu().solve(&rhs).expect("singular normal equations");
        sol.iter().copied().collect()
    }

    fn random_problem(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Benchmark) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let theta_b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
        let bench = Benchmark::new(rng.gen_range(0.2..0.8), 0.01, w).unwrap();
        (theta_b, phi, bench)
    }

    #[test]
    fn two_area_worked_example() {
        // Equal weights and unit loss: moving the weighted mean from 0.3
        // to 0.4 shifts each estimate up by 0.1.
        let bench = Benchmark::new(0.4, 0.01, vec![0.5, 0.5]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.2, 0.4], bench).unwrap();
        let out = bayes_estimate(&inputs);
        assert!((out.estimates[0] - 0.3).abs() < 1e-12);
        assert!((out.estimates[1] - 0.5).abs() < 1e-12);
        assert!(out.out_of_range.is_empty());
    }

    #[test]
    fn exact_estimate_matches_kkt_oracle() {
        for seed in [1u64, 2, 3, 4] {
            let (theta_b, phi, bench) = random_problem(seed, 7);
            let inputs = BayesEstimateInputs::with_loss_weights(
                theta_b.clone(),
                phi.clone(),
                bench.clone(),
                f64::INFINITY,
            )
            .unwrap();
            let got = bayes_estimate(&inputs).estimates;
            let want = kkt_oracle(&theta_b, &phi, &bench);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "seed {seed}: {g} vs {w}");
            }
            let total = bench.weighted_sum(&got);
            assert!(
                (total - bench.y2()).abs() < 1e-12,
                "constraint residual {}",
                total - bench.y2()
            );
        }
    }

    #[test]
    fn penalized_estimate_matches_dense_solve() {
        for lambda in [0.1, 1.0, 100.0] {
            let (theta_b, phi, bench) = random_problem(9, 6);
            let inputs = BayesEstimateInputs::with_loss_weights(
                theta_b.clone(),
                phi.clone(),
                bench.clone(),
                lambda,
            )
            .unwrap();
            let got = bayes_estimate(&inputs).estimates;
            let want = penalized_oracle(&theta_b, &phi, &bench, lambda);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "lambda {lambda}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn large_penalty_approaches_exact() {
        let (theta_b, phi, bench) = random_problem(17, 8);
        let exact = bayes_estimate(
            &BayesEstimateInputs::with_loss_weights(
                theta_b.clone(),
                phi.clone(),
                bench.clone(),
                f64::INFINITY,
            )
            .unwrap(),
        );
        let near = bayes_estimate(
            &BayesEstimateInputs::with_loss_weights(theta_b, phi, bench, 1e12).unwrap(),
        );
        for (a, b) in near.estimates.iter().zip(&exact.estimates) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn penalty_path_is_monotone_from_inputs_to_exact() {
        let (theta_b, phi, bench) = random_problem(23, 5);
        let exact = bayes_estimate(
            &BayesEstimateInputs::with_loss_weights(
                theta_b.clone(),
                phi.clone(),
                bench.clone(),
                f64::INFINITY,
            )
            .unwrap(),
        )
        .estimates;
        // Tiny penalty: essentially no adjustment.
        let tiny = bayes_estimate(
            &BayesEstimateInputs::with_loss_weights(
                theta_b.clone(),
                phi.clone(),
                bench.clone(),
                1e-12,
            )
            .unwrap(),
        )
        .estimates;
        for (t, b) in tiny.iter().zip(&theta_b) {
            assert!((t - b).abs() < 1e-11);
        }
        // Each coordinate moves monotonically toward the exact solution
        // as the penalty grows.
        let mut last = theta_b.clone();
        for lambda in [0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let cur = bayes_estimate(
                &BayesEstimateInputs::with_loss_weights(
                    theta_b.clone(),
                    phi.clone(),
                    bench.clone(),
                    lambda,
                )
                .unwrap(),
            )
            .estimates;
            for i in 0..cur.len() {
                let step = (cur[i] - last[i]).abs();
                let direct = (exact[i] - last[i]).abs();
                assert!(
                    step <= direct + 1e-12,
                    "area {i} overshot at lambda {lambda}"
                );
                assert!(
                    (exact[i] - cur[i]).abs() <= (exact[i] - last[i]).abs() + 1e-12,
                    "area {i} moved away at lambda {lambda}"
                );
            }
            last = cur;
        }
    }

    #[test]
    fn satisfied_constraint_means_no_adjustment() {
        let bench = Benchmark::new(0.35, 0.01, vec![0.25, 0.75]).unwrap();
        // Weighted sum is exactly y2.
        let theta_b = vec![0.35, 0.35];
        let inputs = BayesEstimateInputs::with_loss_weights(
            theta_b.clone(),
            vec![2.0, 0.5],
            bench,
            f64::INFINITY,
        )
        .unwrap();
        let out = bayes_estimate(&inputs);
        for (a, b) in out.estimates.iter().zip(&theta_b) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn loss_weights_steer_the_adjustment() {
        // Quadrupling one area's loss weight scales its share of the
        // shift by 1/4 relative to the other.
        let bench = Benchmark::new(0.5, 0.01, vec![0.5, 0.5]).unwrap();
        let inputs = BayesEstimateInputs::with_loss_weights(
            vec![0.3, 0.3],
            vec![1.0, 4.0],
            bench,
            f64::INFINITY,
        )
        .unwrap();
        let out = bayes_estimate(&inputs).estimates;
        let d0 = out[0] - 0.3;
        let d1 = out[1] - 0.3;
        assert!((d0 / d1 - 4.0).abs() < 1e-10, "shift ratio {}", d0 / d1);
        // And the constraint still holds.
        assert!((0.5 * out[0] + 0.5 * out[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_estimates_are_flagged_not_rejected() {
        let bench = Benchmark::new(0.99, 0.01, vec![0.5, 0.5]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.9, 0.95], bench).unwrap();
        let out = bayes_estimate(&inputs);
        assert_eq!(out.out_of_range, vec![1]);
        assert!(out.estimates[1] > 1.0);
        assert!((0.5 * out.estimates[0] + 0.5 * out.estimates[1] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn input_validation_rejects_bad_shapes_and_weights() {
        let bench = Benchmark::equal_weights(0.3, 0.01, 3).unwrap();
        assert!(BayesEstimateInputs::exact(vec![0.3, 0.3], bench.clone()).is_err());
        assert!(BayesEstimateInputs::with_loss_weights(
            vec![0.3; 3],
            vec![1.0, 1.0],
            bench.clone(),
            f64::INFINITY
        )
        .is_err());
        assert!(BayesEstimateInputs::with_loss_weights(
            vec![0.3; 3],
            vec![1.0, 0.0, 1.0],
            bench.clone(),
            f64::INFINITY
        )
        .is_err());
        assert!(BayesEstimateInputs::new(vec![0.3; 3], bench.clone(), 0.0).is_err());
        assert!(BayesEstimateInputs::new(vec![0.3; 3], bench.clone(), -1.0).is_err());
        assert!(BayesEstimateInputs::new(vec![0.3; 3], bench, f64::NAN).is_err());
    }

    fn random_draws(seed: u64, n_draws: usize, n_areas: usize) -> DrawMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..n_draws * n_areas)
            .map(|_| rng.gen_range(0.1..0.6))
            .collect();
        DrawMatrix::new_unlinked(n_areas, vec![0; n_draws], theta).unwrap()
    }

    #[test]
    fn projection_satisfies_constraint_on_every_row() {
        let draws = random_draws(5, 200, 4);
        let bench = Benchmark::new(0.35, 0.01, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.3; 4], bench.clone()).unwrap();
        let out = project_draws(&draws, &inputs).unwrap();
        assert_eq!(out.method, Method::Project);
        assert_eq!(out.draws.n_draws(), 200);
        assert!(out.draws.internals().is_none());
        for k in 0..out.draws.n_draws() {
            let total = bench.weighted_sum(out.draws.theta_row(k));
            assert!(
                (total - 0.35).abs() < 1e-12,
                "row {k} residual {}",
                total - 0.35
            );
        }
    }

    #[test]
    fn projection_matches_kkt_oracle_row_by_row() {
        let draws = random_draws(8, 10, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let phi: Vec<f64> = (0..5).map(|_| rng.gen_range(0.5..2.0)).collect();
        let bench = Benchmark::new(0.4, 0.01, vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        let inputs = BayesEstimateInputs::with_loss_weights(
            vec![0.3; 5],
            phi.clone(),
            bench.clone(),
            f64::INFINITY,
        )
        .unwrap();
        let out = project_draws(&draws, &inputs).unwrap();
        for k in 0..10 {
            let want = kkt_oracle(draws.theta_row(k), &phi, &bench);
            for (g, w) in out.draws.theta_row(k).iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "row {k}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn projection_fixes_satisfying_rows_and_collapses_constant_rows() {
        let bench = Benchmark::new(0.3, 0.01, vec![0.6, 0.4]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.3, 0.3], bench.clone()).unwrap();
        // Row 0 already satisfies the constraint; rows 1-2 are identical.
        let theta = vec![0.3, 0.3, 0.2, 0.5, 0.2, 0.5];
        let draws = DrawMatrix::new_unlinked(2, vec![0; 3], theta).unwrap();
        let out = project_draws(&draws, &inputs).unwrap();
        for (a, b) in out.draws.theta_row(0).iter().zip([0.3, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.draws.theta_row(1), out.draws.theta_row(2));
        let expect = bayes_estimate(&BayesEstimateInputs::exact(vec![0.2, 0.5], bench).unwrap());
        for (a, b) in out.draws.theta_row(1).iter().zip(&expect.estimates) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_flags_rows_leaving_unit_interval() {
        let bench = Benchmark::new(0.95, 0.01, vec![0.5, 0.5]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.5, 0.5], bench.clone()).unwrap();
        // Row 0 projects far past 1 in area 1; row 1 stays inside.
        let theta = vec![0.5, 0.999, 0.93, 0.95];
        let draws = DrawMatrix::new_unlinked(2, vec![0, 0], theta).unwrap();
        let out = project_draws(&draws, &inputs).unwrap();
        assert_eq!(out.flagged_rows, vec![0]);
        assert_eq!(out.warnings.len(), 1);
        // Flagged rows still satisfy the constraint.
        let total = bench.weighted_sum(out.draws.theta_row(0));
        assert!((total - 0.95).abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_finite_penalty_and_bad_shapes() {
        let draws = random_draws(3, 5, 3);
        let bench3 = Benchmark::equal_weights(0.3, 0.01, 3).unwrap();
        let soft = BayesEstimateInputs::new(vec![0.3; 3], bench3, 10.0).unwrap();
        assert!(project_draws(&draws, &soft).is_err());
        let bench4 = Benchmark::equal_weights(0.3, 0.01, 4).unwrap();
        let mismatched = BayesEstimateInputs::exact(vec![0.3; 4], bench4).unwrap();
        assert!(project_draws(&draws, &mismatched).is_err());
    }

    #[test]
    fn projection_drops_internals_of_linked_input() {
        use crate::link::logit;
        use crate::types::{Internals, LinkKind};
        let theta = vec![0.2, 0.4, 0.3, 0.5];
        let eta: Vec<f64> = theta.iter().map(|t| logit(*t).unwrap()).collect();
        let draws = DrawMatrix::new_linked(
            2,
            vec![0, 0],
            theta,
            Internals {
                eta,
                beta0: vec![0.0, 0.0],
                hypers: vec![],
                link: LinkKind::Logit,
            },
        )
        .unwrap();
        let bench = Benchmark::new(0.3, 0.01, vec![0.5, 0.5]).unwrap();
        let inputs = BayesEstimateInputs::exact(vec![0.3, 0.3], bench).unwrap();
        let out = project_draws(&draws, &inputs).unwrap();
        assert!(out.draws.internals().is_none());
    }
}
