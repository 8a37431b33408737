//! Bulk effective sample size on rank-normalized split chains.

use super::{is_constant, rank_normalize, split_halves, validate_chains};
use crate::error::Result;

/// Bulk ESS: chains are halved, draws replaced by normal scores of
/// their pooled ranks, and the effective sample size computed from the
/// multi-chain autocorrelation estimate
/// `rho_t = 1 - (W - mean_j acov_j(t)) / V̂⁺`,
/// summed under Geyer's initial monotone positive-pair truncation:
/// `ESS = S / (-1 + 2 sum rho_t)`.
///
/// Antithetic chains can legitimately exceed S (super-efficiency); the
/// estimate is capped at `S log10(S)`. Constant chains have no variance
/// to mix and return NaN.
pub fn bulk_ess(chains: &[Vec<f64>]) -> Result<f64> {
    validate_chains(chains)?;
    Ok(ess_mean(&rank_normalize(&split_halves(chains))))
}

/// Mean autocovariance at `lag` across chains, each centered at its own
/// mean, normalized by chain length (biased form). A constant chain's
/// autocovariance is exactly zero (the float sum would leave ulp noise).
fn mean_acov(chains: &[Vec<f64>], means: &[f64], lag: usize) -> f64 {
    let m = chains[0].len();
    chains
        .iter()
        .zip(means)
        .map(|(c, mu)| {
            if is_constant(c) {
                return 0.0;
            }
            (0..m - lag)
                .map(|i| (c[i] - mu) * (c[i + lag] - mu))
                .sum::<f64>()
                / m as f64
        })
        .sum::<f64>()
        / chains.len() as f64
}

/// ESS of already-split, already-transformed chains.
pub(crate) fn ess_mean(chains: &[Vec<f64>]) -> f64 {
    let k = chains.len();
    let m = chains[0].len();
    let s_total = (k * m) as f64;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / m as f64)
        .collect();

    // W (mean within-chain variance, unbiased) and V-hat-plus.
    let mean_var = mean_acov(chains, &means, 0) * m as f64 / (m as f64 - 1.0);
    let mut var_plus = mean_var * (m as f64 - 1.0) / m as f64;
    if k > 1 {
        let grand = means.iter().sum::<f64>() / k as f64;
        var_plus += means
            .iter()
            .map(|mu| (mu - grand) * (mu - grand))
            .sum::<f64>()
            / (k as f64 - 1.0);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    // Paired autocorrelations, accumulated while each (even, odd) pair
    // sum stays positive.
    let mut rho = vec![0.0f64; m + 2];
    rho[0] = 1.0;
    let mut rho_even = 1.0f64;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(chains, &means, 1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 0usize;
    while t + 5 < m && (rho_even + rho_odd).is_finite() && rho_even + rho_odd > 0.0 {
        t += 2;
        rho_even = 1.0 - (mean_var - mean_acov(chains, &means, t)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(chains, &means, t + 1)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t] = rho_even;
            rho[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    // If the loop left on a mixed pair, keep the positive even member.
    if rho_even > 0.0 {
        rho[max_t] = rho_even;
    }

    // Geyer's initial monotone sequence: successive pair sums may not
    // increase.
    let mut t = 0usize;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            rho[t] = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t + 1] = rho[t];
        }
    }

    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    let cap = s_total * s_total.log10();
    (s_total / tau).min(cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn iid_chains(rng: &mut ChaCha12Rng, k: usize, n: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_calibrate_to_total_draws() {
        // 200 replications of 4 x 1000 iid: ESS within +-15% of 4000 at
        // least 95% of the time.
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        let mut inside = 0;
        for _ in 0..200 {
            let ess = bulk_ess(&iid_chains(&mut rng, 4, 1000)).unwrap();
            if (ess - 4000.0).abs() <= 0.15 * 4000.0 {
                inside += 1;
            }
        }
        assert!(inside >= 190, "only {inside}/200 within 15% of 4000");
    }

    #[test]
    fn ar1_efficiency_matches_the_analytic_ratio() {
        // AR(1) with rho = 0.9 has tau = (1+rho)/(1-rho) = 19, so the
        // ESS/S ratio should sit near (1-rho)/(1+rho) ~= 0.0526.
        let rho: f64 = 0.9;
        let innov = (1.0 - rho * rho).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(321);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x: f64 = rng.sample(StandardNormal);
                (0..20_000)
                    .map(|_| {
                        x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let s = 80_000.0;
        let want = (1.0 - rho) / (1.0 + rho);
        let got = bulk_ess(&chains).unwrap() / s;
        assert!(
            (got - want).abs() <= 0.25 * want,
            "ESS ratio {got} vs analytic {want}"
        );
    }

    #[test]
    fn antithetic_chains_exceed_total_but_respect_the_cap() {
        // Strict +1/-1 alternation: enormous negative lag-1 correlation
        // makes the chain super-efficient; the estimate must stay at or
        // under S log10(S).
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                (0..1000)
                    .map(|i| if (i + c) % 2 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let s = 4000.0f64;
        let ess = bulk_ess(&chains).unwrap();
        assert!(
            ess > s,
            "antithetic chains should look super-efficient: {ess}"
        );
        assert!(ess <= s * s.log10() + 1e-9, "cap violated: {ess}");
    }

    #[test]
    fn affine_transforms_leave_ess_bit_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let chains = iid_chains(&mut rng, 4, 300);
        let moved: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| 3.5 * x - 11.0).collect())
            .collect();
        let a = bulk_ess(&chains).unwrap();
        let b = bulk_ess(&moved).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn constant_chains_have_no_ess() {
        let chains = vec![vec![0.3; 100], vec![0.3; 100]];
        assert!(bulk_ess(&chains).unwrap().is_nan());
    }

    #[test]
    fn correlated_chains_report_fewer_effective_draws() {
        // Mild AR(1): ESS should drop well below S but stay positive.
        let rho: f64 = 0.5;
        let innov = (1.0 - rho * rho).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(808);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x: f64 = rng.sample(StandardNormal);
                (0..2000)
                    .map(|_| {
                        x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = bulk_ess(&chains).unwrap();
        let want = 8000.0 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (ess - want).abs() < 0.3 * want,
            "ESS {ess} vs AR(1) expectation {want}"
        );
    }
}
