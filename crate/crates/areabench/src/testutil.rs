//! Shared helpers for in-crate tests: a small simulated dataset in the
//! simulation-study shape and a two-sample KS statistic.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};

use crate::types::{ClusterDataset, ClusterRecord};

/// Nine-area fixture in the simulation-study shape: known prevalences
/// 0.28..0.36, equal cluster counts, binomial cluster totals.
pub(crate) fn simulated_nine_area(
    clusters_per_area: usize,
    trials: u64,
    seed: u64,
) -> (ClusterDataset, Vec<f64>) {
    let probs: Vec<f64> = (0..9).map(|i| 0.28 + 0.01 * i as f64).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (area, &p) in probs.iter().enumerate() {
        for _ in 0..clusters_per_area {
            let y = Binomial::new(trials, p).unwrap().sample(&mut rng);
            records.push(ClusterRecord {
                area,
                trials,
                successes: y,
            });
        }
    }
    (ClusterDataset::new(9, records).unwrap(), probs)
}

/// Kolmogorov-Smirnov statistic between two samples.
pub(crate) use crate::harness::two_sample_ks as ks_stat;
