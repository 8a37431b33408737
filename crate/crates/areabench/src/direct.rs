//! Design-based (weighted ratio) direct estimates per area, with a
//! with-replacement first-stage cluster variance and a delta-method
//! transfer to the logit scale.

use crate::error::{Error, Result};
use crate::types::{AreaDirect, ClusterDataset, DirectEstimates};

/// Weighted prevalence per area with design-based uncertainty.
///
/// For area i with clusters r (weight w_r, trials n_r, successes y_r):
///
/// * theta_hat = sum(w y) / sum(w n), a ratio estimator, so invariant
///   to a global rescaling of the weights;
/// * V* = m/(m-1) * sum(z_r^2) / (sum(w n))^2 with z_r = w_r (y_r - theta_hat n_r),
///   the with-replacement between-cluster variance (the z_r sum to zero
///   by construction of theta_hat);
/// * logit_variance = V* / (theta_hat (1 - theta_hat))^2 by the delta method.
///
/// Areas with degenerate estimates (no data, prevalence exactly 0 or 1)
/// come back absent rather than imputed; areas with a single cluster or
/// zero between-cluster spread keep their estimate but carry no variance.
pub fn direct_estimates(data: &ClusterDataset, design_weights: &[f64]) -> Result<DirectEstimates> {
    if design_weights.len() != data.records().len() {
        return Err(Error::invalid(format!(
            "{} design weights for {} records",
            design_weights.len(),
            data.records().len()
        )));
    }
    if design_weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("design weights must be positive"));
    }

    let mut areas = Vec::with_capacity(data.n_areas());
    for i in 0..data.n_areas() {
        let cluster: Vec<(f64, f64, f64)> = data
            .records()
            .iter()
            .zip(design_weights)
            .filter(|(r, _)| r.area == i)
            .map(|(r, &w)| (w, r.trials as f64, r.successes as f64))
            .collect();
        if cluster.is_empty() {
            areas.push(None);
            continue;
        }
        let wn: f64 = cluster.iter().map(|(w, n, _)| w * n).sum();
        let wy: f64 = cluster.iter().map(|(w, _, y)| w * y).sum();
        let theta_hat = wy / wn;
        if !(theta_hat > 0.0 && theta_hat < 1.0) {
            areas.push(None);
            continue;
        }
        let m = cluster.len();
        let logit_variance = if m >= 2 {
            let ss: f64 = cluster
                .iter()
                .map(|(w, n, y)| {
                    let z = w * (y - theta_hat * n);
                    z * z
                })
                .sum();
            let vstar = m as f64 / (m as f64 - 1.0) * ss / (wn * wn);
            if vstar > 0.0 {
                let denom = theta_hat * (1.0 - theta_hat);
                Some(vstar / (denom * denom))
            } else {
                None
            }
        } else {
            None
        };
        areas.push(Some(AreaDirect {
            theta_hat,
            logit_variance,
            n_clusters: m,
            weighted_trials: wn,
        }));
    }
    Ok(DirectEstimates { areas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ClusterRecord;

    fn rec(area: usize, trials: u64, successes: u64) -> ClusterRecord {
        ClusterRecord {
            area,
            trials,
            successes,
        }
    }

    #[test]
    fn single_record_gives_plain_proportion_without_variance() {
        let d = ClusterDataset::new(1, vec![rec(0, 10, 5)]).unwrap();
        let est = direct_estimates(&d, &[1.0]).unwrap();
        let a = est.areas[0].as_ref().unwrap();
        assert_eq!(a.theta_hat, 0.5);
        assert_eq!(a.logit_variance, None);
        assert_eq!(a.n_clusters, 1);
    }

    #[test]
    fn two_equal_weight_records_pool_counts() {
        let d = ClusterDataset::new(1, vec![rec(0, 10, 2), rec(0, 30, 10)]).unwrap();
        let est = direct_estimates(&d, &[1.0, 1.0]).unwrap();
        let a = est.areas[0].as_ref().unwrap();
        assert_eq!(a.theta_hat, 0.3);
        assert!(a.logit_variance.unwrap() > 0.0);
    }

    /// 3 areas x 4 clusters with unequal weights, validated against a
    /// hand computation of the with-replacement cluster variance formula
    /// (weighted residual totals z_r = w_r(y_r - theta n_r), then
    /// m/(m-1) sum(z^2) / (sum w n)^2, then the delta-method transfer).
    #[test]
    fn clustered_fixture_matches_hand_computation() {
        let records = vec![
            rec(0, 50, 14),
            rec(0, 40, 13),
            rec(0, 60, 21),
            rec(0, 30, 8),
            rec(1, 45, 20),
            rec(1, 55, 22),
            rec(1, 35, 17),
            rec(1, 65, 27),
            rec(2, 70, 30),
            rec(2, 50, 24),
            rec(2, 40, 15),
            rec(2, 40, 19),
        ];
        let weights = vec![1.0, 2.0, 1.5, 0.5, 1.0, 1.0, 2.0, 1.0, 0.8, 1.2, 1.0, 1.0];
        let d = ClusterDataset::new(3, records).unwrap();
        let est = direct_estimates(&d, &weights).unwrap();

        let expected = [
            (0.32127659574468087, 0.005941766957498043),
            (0.43829787234042555, 0.007069829968912225),
            (0.44285714285714284, 0.008339107949175304),
        ];
        for (i, (th, lv)) in expected.iter().enumerate() {
            let a = est.areas[i].as_ref().unwrap();
            assert!((a.theta_hat - th).abs() < 1e-15, "area {i} theta");
            assert!(
                (a.logit_variance.unwrap() - lv).abs() / lv < 1e-12,
                "area {i} logit variance: {} vs {}",
                a.logit_variance.unwrap(),
                lv
            );
        }
    }

    #[test]
    fn invariant_to_global_weight_rescaling() {
        let records = vec![rec(0, 50, 14), rec(0, 40, 13), rec(0, 60, 21)];
        let d = ClusterDataset::new(1, records).unwrap();
        let w = [1.0, 2.0, 1.5];
        let base = direct_estimates(&d, &w).unwrap();
        let a0 = base.areas[0].as_ref().unwrap();

        // Power-of-two rescaling is exact in floating point.
        let w4: Vec<f64> = w.iter().map(|x| x * 4.0).collect();
        let e4 = direct_estimates(&d, &w4).unwrap();
        let a4 = e4.areas[0].as_ref().unwrap();
        assert_eq!(a0.theta_hat, a4.theta_hat);
        assert_eq!(a0.logit_variance, a4.logit_variance);

        // Arbitrary rescaling agrees to rounding error.
        let w37: Vec<f64> = w.iter().map(|x| x * 3.7).collect();
        let e37 = direct_estimates(&d, &w37).unwrap();
        let a37 = e37.areas[0].as_ref().unwrap();
        assert!((a0.theta_hat - a37.theta_hat).abs() < 1e-14);
        let (v0, v37) = (a0.logit_variance.unwrap(), a37.logit_variance.unwrap());
        assert!((v0 - v37).abs() / v0 < 1e-12);
    }

    #[test]
    fn degenerate_areas_are_flagged_absent() {
        let records = vec![
            rec(0, 10, 0),
            rec(0, 20, 0), // all failures
            rec(1, 10, 10),
            rec(1, 5, 5), // all successes
            rec(2, 10, 3),
            rec(2, 10, 4), // fine
        ];
        let d = ClusterDataset::new(4, records).unwrap(); // area 3 has no data
        let est = direct_estimates(&d, &[1.0; 6]).unwrap();
        assert!(est.areas[0].is_none());
        assert!(est.areas[1].is_none());
        assert!(est.areas[2].is_some());
        assert!(est.areas[3].is_none());
        let usable: Vec<_> = est.usable().collect();
        assert_eq!(usable.len(), 1);
        assert_eq!(usable[0].0, 2);
    }

    #[test]
    fn identical_clusters_have_no_between_cluster_variance() {
        let d = ClusterDataset::new(1, vec![rec(0, 10, 3), rec(0, 10, 3)]).unwrap();
        let est = direct_estimates(&d, &[1.0, 1.0]).unwrap();
        let a = est.areas[0].as_ref().unwrap();
        assert_eq!(a.theta_hat, 0.3);
        assert_eq!(
            a.logit_variance, None,
            "zero spread cannot support a variance"
        );
    }

    #[test]
    fn weight_vector_must_match_records() {
        let d = ClusterDataset::new(1, vec![rec(0, 10, 5)]).unwrap();
        assert!(direct_estimates(&d, &[]).is_err());
        assert!(direct_estimates(&d, &[0.0]).is_err());
        assert!(direct_estimates(&d, &[-1.0]).is_err());
    }
}
