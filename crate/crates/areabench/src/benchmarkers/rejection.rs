//! Rejection sampling against the benchmark likelihood.
//!
//! Each unbenchmarked posterior draw is accepted independently with
//! probability `exp(-(sum_i w_i theta_i - y2)^2 / (2 sigma2_y2))` — the
//! benchmark likelihood at that draw divided by its maximum — so the
//! accepted draws are distributed according to the joint benchmarked
//! posterior. Draws are consumed strictly in order and never revisited:
//! an accepted draw enters the output once, and consumption stops early
//! only when a requested number of acceptances has been reached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::types::{Benchmark, BenchmarkResult, DrawMatrix, Method};

/// Filter `draws` by rejection against the benchmark likelihood.
///
/// With `target_accepted = Some(t)`, consumption stops as soon as `t`
/// draws have been accepted; a warning is attached if the input ran out
/// first. The result's `acceptance_rate` is accepted over considered.
/// If every considered draw is rejected the benchmark and the draws are
/// irreconcilable at this sample size, and the error reports how many
/// draws were considered and the largest acceptance probability seen.
pub fn rejection_benchmark(
    draws: &DrawMatrix,
    bench: &Benchmark,
    target_accepted: Option<usize>,
    seed: u64,
) -> Result<BenchmarkResult> {
    if draws.n_areas() != bench.n_areas() {
        return Err(Error::invalid(format!(
            "draws cover {} areas, benchmark {}",
            draws.n_areas(),
            bench.n_areas()
        )));
    }
    if target_accepted == Some(0) {
        return Err(Error::invalid("target accepted count must be positive"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut accepted: Vec<usize> = Vec::new();
    let mut considered = 0usize;
    let mut max_p = 0.0f64;
    for k in 0..draws.n_draws() {
        considered += 1;
        let p = bench.acceptance_prob(draws.theta_row(k));
        max_p = max_p.max(p);
        if rng.gen::<f64>() < p {
            accepted.push(k);
            if target_accepted == Some(accepted.len()) {
                break;
            }
        }
    }

    if accepted.is_empty() {
        return Err(Error::BenchmarkInconsistent {
            considered,
            max_acceptance_prob: max_p,
        });
    }
    let mut warnings = Vec::new();
    if let Some(t) = target_accepted {
        if accepted.len() < t {
            warnings.push(format!(
                "accepted {} of the requested {t} draws before the input ran out",
                accepted.len()
            ));
        }
    }
    Ok(BenchmarkResult {
        method: Method::Rejection,
        draws: draws.subset(&accepted)?,
        acceptance_rate: Some(accepted.len() as f64 / considered as f64),
        flagged_rows: vec![],
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn constant_draws(row: &[f64], n_rows: usize) -> DrawMatrix {
        let theta: Vec<f64> = row
            .iter()
            .copied()
            .cycle()
            .take(row.len() * n_rows)
            .collect();
        DrawMatrix::new_unlinked(row.len(), vec![0; n_rows], theta).unwrap()
    }

    /// Draws spread around the simulation-study prevalences, against the
    /// weak-benchmark cell (y2 = 0.29, sigma2 = 0.01).
    fn spread_draws(seed: u64, n_rows: usize) -> (DrawMatrix, Benchmark) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.03).unwrap();
        let theta: Vec<f64> = (0..n_rows * 9)
            .map(|i| {
                let base = 0.28 + 0.01 * (i % 9) as f64;
                (base + noise.sample(&mut rng)).clamp(0.01, 0.99)
            })
            .collect();
        let draws = DrawMatrix::new_unlinked(9, vec![0; n_rows], theta).unwrap();
        let bench = Benchmark::equal_weights(0.29, 0.01, 9).unwrap();
        (draws, bench)
    }

    #[test]
    fn zero_deviation_draws_are_always_accepted() {
        // Weighted total exactly y2: acceptance probability 1.
        let draws = constant_draws(&[0.3, 0.3], 50);
        let bench = Benchmark::new(0.3, 1e-6, vec![0.5, 0.5]).unwrap();
        let out = rejection_benchmark(&draws, &bench, None, 1).unwrap();
        assert_eq!(out.method, Method::Rejection);
        assert_eq!(out.draws.n_draws(), 50);
        assert_eq!(out.acceptance_rate, Some(1.0));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn one_sigma_deviation_accepts_at_exp_minus_half() {
        // Weighted total one benchmark standard deviation from y2:
        // acceptance probability exp(-1/2) per draw.
        let sigma2: f64 = 0.0016;
        let y2 = 0.3 + sigma2.sqrt();
        let draws = constant_draws(&[0.3, 0.3], 50_000);
        let bench = Benchmark::new(y2, sigma2, vec![0.5, 0.5]).unwrap();
        let out = rejection_benchmark(&draws, &bench, None, 7).unwrap();
        let p = (-0.5f64).exp();
        let se = (p * (1.0 - p) / 50_000.0).sqrt();
        let rate = out.acceptance_rate.unwrap();
        assert!(
            (rate - p).abs() < 2.0 * se,
            "rate {rate} vs exp(-1/2) = {p} (se {se})"
        );
    }

    #[test]
    fn acceptance_rate_matches_plug_in_monte_carlo_mean() {
        // Empirical acceptance should match the mean per-draw acceptance
        // probability within two (Poisson-binomial) standard errors.
        let (draws, bench) = spread_draws(11, 40_000);
        let probs: Vec<f64> = (0..draws.n_draws())
            .map(|k| bench.acceptance_prob(draws.theta_row(k)))
            .collect();
        let mean_p = probs.iter().sum::<f64>() / probs.len() as f64;
        let se = (probs.iter().map(|p| p * (1.0 - p)).sum::<f64>()).sqrt() / probs.len() as f64;
        let out = rejection_benchmark(&draws, &bench, None, 13).unwrap();
        let rate = out.acceptance_rate.unwrap();
        assert!(
            (rate - mean_p).abs() < 2.0 * se,
            "rate {rate} vs plug-in mean {mean_p} (se {se})"
        );
    }

    #[test]
    fn all_rejections_report_benchmark_inconsistency() {
        // Draws sit 0.3 from the benchmark at sigma2 = 1e-3: acceptance
        // probability exp(-45) is far below anything 100 uniforms reach.
        let draws = constant_draws(&[0.5, 0.5], 100);
        let bench = Benchmark::new(0.2, 1e-3, vec![0.5, 0.5]).unwrap();
        match rejection_benchmark(&draws, &bench, None, 3) {
            Err(Error::BenchmarkInconsistent {
                considered,
                max_acceptance_prob,
            }) => {
                assert_eq!(considered, 100);
                let expect = bench.acceptance_prob(&[0.5, 0.5]);
                assert!((max_acceptance_prob - expect).abs() <= 1e-12 * expect);
            }
            other => panic!("expected BenchmarkInconsistent, got {other:?}"),
        }
    }

    #[test]
    fn target_stops_consumption_and_keeps_input_order() {
        let (draws, bench) = spread_draws(21, 1000);
        let out = rejection_benchmark(&draws, &bench, Some(50), 5).unwrap();
        assert_eq!(out.draws.n_draws(), 50);
        assert!(out.warnings.is_empty());
        let rate = out.acceptance_rate.unwrap();
        assert!(rate > 0.5, "weak benchmark should accept most draws");
        // The accepted rows are a subsequence of the input rows: walk the
        // input once, matching each accepted row in order.
        let mut next = 0usize;
        for k in 0..out.draws.n_draws() {
            let row = out.draws.theta_row(k);
            let mut found = None;
            for j in next..draws.n_draws() {
                if draws.theta_row(j) == row {
                    found = Some(j);
                    break;
                }
            }
            next = found.expect("accepted row missing from input order") + 1;
        }
        // Considered count is recoverable from the rate and is at most
        // the input size.
        let considered = (50.0 / rate).round() as usize;
        assert!(considered <= 1000);
    }

    #[test]
    fn unreachable_target_warns_instead_of_failing() {
        let (draws, bench) = spread_draws(33, 200);
        let out = rejection_benchmark(&draws, &bench, Some(100_000), 5).unwrap();
        assert!(out.draws.n_draws() < 100_000);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("ran out"));
    }

    #[test]
    fn same_seed_reproduces_and_seeds_differ() {
        // Tune the gap so acceptance is near 1/2 and seed choice matters.
        let sigma2: f64 = 0.0016;
        let y2 = 0.3 + sigma2.sqrt() * (2.0 * 2f64.ln()).sqrt();
        let draws = constant_draws(&[0.3, 0.3], 1000);
        let bench = Benchmark::new(y2, sigma2, vec![0.5, 0.5]).unwrap();
        let a = rejection_benchmark(&draws, &bench, None, 17).unwrap();
        let b = rejection_benchmark(&draws, &bench, None, 17).unwrap();
        assert_eq!(a.draws.theta_flat(), b.draws.theta_flat());
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
        let c = rejection_benchmark(&draws, &bench, None, 18).unwrap();
        assert_ne!(a.draws.n_draws(), 0);
        assert!(
            a.draws.n_draws() != c.draws.n_draws() || a.draws.theta_flat() != c.draws.theta_flat(),
            "different seeds produced identical accepted sets"
        );
    }

    #[test]
    fn acceptance_grows_with_benchmark_variance() {
        // Same draws, same seed: the per-draw uniforms are consumed in
        // lockstep, so the accepted set can only grow as sigma2_y2 does.
        let (draws, _) = spread_draws(44, 5000);
        let mut last = 0usize;
        for sigma2 in [1e-4, 1e-3, 1e-2, 1e-1] {
            let bench = Benchmark::equal_weights(0.29, sigma2, 9).unwrap();
            let n = match rejection_benchmark(&draws, &bench, None, 6) {
                Ok(out) => out.draws.n_draws(),
                Err(Error::BenchmarkInconsistent { .. }) => 0,
                Err(other) => panic!("unexpected error {other:?}"),
            };
            assert!(
                n >= last,
                "acceptance fell from {last} to {n} as sigma2 rose to {sigma2}"
            );
            last = n;
        }
        assert!(last > 0);
    }

    #[test]
    fn bad_shapes_and_zero_target_are_rejected() {
        let draws = constant_draws(&[0.3, 0.3], 10);
        let bench3 = Benchmark::equal_weights(0.3, 0.01, 3).unwrap();
        assert!(rejection_benchmark(&draws, &bench3, None, 1).is_err());
        let bench2 = Benchmark::new(0.3, 0.01, vec![0.5, 0.5]).unwrap();
        assert!(rejection_benchmark(&draws, &bench2, Some(0), 1).is_err());
    }
}
