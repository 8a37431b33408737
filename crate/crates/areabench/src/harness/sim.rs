//! Study grid definition and deterministic dataset simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::types::{ClusterDataset, ClusterRecord};

/// Stream tags keeping the per-purpose RNG streams of one (cell,
/// replicate) apart. Data and the unadjusted fit deliberately ignore
/// the benchmark coordinates of the cell, so cells differing only in
/// (y2, sigma2_y2) run on matched data and matched unadjusted draws.
pub(crate) const TAG_DATA: u64 = 1;
pub(crate) const TAG_FREE_FIT: u64 = 2;
pub(crate) const TAG_FILTER: u64 = 3;
pub(crate) const TAG_ADJUSTED_FIT: u64 = 4;
pub(crate) const TAG_MH: u64 = 5;
pub(crate) const TAG_JOINT_FIT: u64 = 6;

/// SplitMix64 finalizer step, used to mix grid coordinates into seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed from an ordered list of coordinates.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// The full simulation-study design: a Cartesian grid of cluster counts
/// and benchmark settings over a fixed set of areas with known
/// prevalences.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n_areas: usize,
    /// True per-area prevalences the binomial data are drawn from.
    pub area_probs: Vec<f64>,
    /// Binomial trials in every cluster.
    pub trials_per_cluster: u64,
    /// Grid axis: clusters per area.
    pub clusters_per_area: Vec<usize>,
    /// Grid axis: benchmark values.
    pub y2_values: Vec<f64>,
    /// Grid axis: benchmark variances.
    pub sigma2_y2_values: Vec<f64>,
    /// Replicate datasets per cell.
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    /// The study defaults: nine areas at prevalences 0.28, 0.29, ...,
    /// 0.36, one hundred trials per cluster, cluster counts
    /// {5, 10, 100, 1000}, benchmark values {0.29, 0.30} with variances
    /// {0.01, 0.0001}, and ten replicates.
    fn default() -> Self {
        SimulationSpec {
            n_areas: 9,
            area_probs: (0..9).map(|i| 0.28 + 0.01 * i as f64).collect(),
            trials_per_cluster: 100,
            clusters_per_area: vec![5, 10, 100, 1000],
            y2_values: vec![0.29, 0.30],
            sigma2_y2_values: vec![0.01, 0.0001],
            replicates: 10,
            seed: 1,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_areas == 0 {
            return Err(Error::invalid("the study needs at least one area"));
        }
        if self.area_probs.len() != self.n_areas {
            return Err(Error::invalid(format!(
                "{} prevalences for {} areas",
                self.area_probs.len(),
                self.n_areas
            )));
        }
        if self.area_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("area prevalences must lie in [0, 1]"));
        }
        if self.trials_per_cluster == 0 {
            return Err(Error::invalid("clusters need at least one trial"));
        }
        if self.clusters_per_area.is_empty() || self.clusters_per_area.contains(&0) {
            return Err(Error::invalid(
                "the cluster-count axis needs positive entries",
            ));
        }
        if self.y2_values.is_empty() || self.y2_values.iter().any(|y| !(*y > 0.0 && *y < 1.0)) {
            return Err(Error::invalid(
                "the benchmark-value axis needs entries in (0, 1)",
            ));
        }
        if self.sigma2_y2_values.is_empty() || self.sigma2_y2_values.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid(
                "the benchmark-variance axis needs positive entries",
            ));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("the study needs at least one replicate"));
        }
        Ok(())
    }

    /// Equal benchmark weights, 1/n_areas each.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.n_areas as f64; self.n_areas]
    }

    /// Every cell of the Cartesian grid, in a fixed enumeration order
    /// (cluster count outermost, then benchmark value, then variance).
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &clusters in &self.clusters_per_area {
            for &y2 in &self.y2_values {
                for &sigma2 in &self.sigma2_y2_values {
                    out.push(GridCell {
                        clusters_per_area: clusters,
                        y2,
                        sigma2_y2: sigma2,
                    });
                }
            }
        }
        out
    }

    /// The default run: the first benchmark value with every variance
    /// and cluster count — the headline comparison slice of the study.
    pub fn default_run_cells(&self) -> Vec<GridCell> {
        let y2 = self.y2_values[0];
        let mut out = Vec::new();
        for &clusters in &self.clusters_per_area {
            for &sigma2 in &self.sigma2_y2_values {
                out.push(GridCell {
                    clusters_per_area: clusters,
                    y2,
                    sigma2_y2: sigma2,
                });
            }
        }
        out
    }
}

/// One point of the study grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub clusters_per_area: usize,
    pub y2: f64,
    pub sigma2_y2: f64,
}

impl GridCell {
    pub fn validate(&self) -> Result<()> {
        if self.clusters_per_area == 0 {
            return Err(Error::invalid("a cell needs at least one cluster per area"));
        }
        if !(self.y2 > 0.0 && self.y2 < 1.0) {
            return Err(Error::invalid(format!(
                "cell benchmark value {} not in (0, 1)",
                self.y2
            )));
        }
        if !(self.sigma2_y2 > 0.0) {
            return Err(Error::invalid(format!(
                "cell benchmark variance must be positive, got {}",
                self.sigma2_y2
            )));
        }
        Ok(())
    }

    /// Stable identifier used in report tables.
    pub fn label(&self) -> String {
        format!(
            "c{:04}-y{}-v{}",
            self.clusters_per_area, self.y2, self.sigma2_y2
        )
    }
}

/// Simulates the binomial cluster data of one cell and replicate: for
/// each area, `clusters_per_area` clusters of `trials_per_cluster`
/// Bernoulli trials at that area's prevalence.
///
/// Deterministic under `(spec.seed, cell, replicate)`. The stream
/// depends on the cell only through its cluster count, so cells that
/// differ only in their benchmark settings share datasets and benchmark
/// comparisons run on matched data.
pub fn simulate_dataset(
    spec: &SimulationSpec,
    cell: &GridCell,
    replicate: usize,
) -> Result<ClusterDataset> {
    spec.validate()?;
    cell.validate()?;
    if replicate >= spec.replicates {
        return Err(Error::invalid(format!(
            "replicate {replicate} outside the configured 0..{}",
            spec.replicates
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(derive_seed(&[
        TAG_DATA,
        cell.clusters_per_area as u64,
        replicate as u64,
    ]));
    let mut records = Vec::with_capacity(spec.n_areas * cell.clusters_per_area);
    for (area, &p) in spec.area_probs.iter().enumerate() {
        let binom = Binomial::new(spec.trials_per_cluster, p).map_err(|e| {
            Error::invalid(format!("binomial({}, {p}): {e}", spec.trials_per_cluster))
        })?;
        for _ in 0..cell.clusters_per_area {
            records.push(ClusterRecord {
                area,
                trials: spec.trials_per_cluster,
                successes: binom.sample(&mut rng),
            });
        }
    }
    ClusterDataset::new(spec.n_areas, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_matches_the_study_design() {
        let spec = SimulationSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.n_areas, 9);
        assert_eq!(spec.area_probs.len(), 9);
        assert!((spec.area_probs[0] - 0.28).abs() < 1e-12);
        assert!((spec.area_probs[8] - 0.36).abs() < 1e-12);
        assert_eq!(spec.trials_per_cluster, 100);
        assert_eq!(spec.clusters_per_area, vec![5, 10, 100, 1000]);
        assert_eq!(spec.y2_values, vec![0.29, 0.30]);
        assert_eq!(spec.sigma2_y2_values, vec![0.01, 0.0001]);
        assert_eq!(spec.replicates, 10);
        let w = spec.weights();
        assert_eq!(w.len(), 9);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[0] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(spec.cells().len(), 16);
        let defaults = spec.default_run_cells();
        assert_eq!(defaults.len(), 8);
        assert!(defaults.iter().all(|c| c.y2 == 0.29));
        assert!(defaults.iter().any(|c| c.sigma2_y2 == 0.01));
        assert!(defaults.iter().any(|c| c.sigma2_y2 == 0.0001));
    }

    #[test]
    fn same_coordinates_give_bit_identical_data() {
        let spec = SimulationSpec::default();
        let cell = GridCell {
            clusters_per_area: 10,
            y2: 0.29,
            sigma2_y2: 0.01,
        };
        let a = simulate_dataset(&spec, &cell, 3).unwrap();
        let b = simulate_dataset(&spec, &cell, 3).unwrap();
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn benchmark_coordinates_do_not_change_the_data() {
        let spec = SimulationSpec::default();
        let a = simulate_dataset(
            &spec,
            &GridCell {
                clusters_per_area: 10,
                y2: 0.29,
                sigma2_y2: 0.01,
            },
            2,
        )
        .unwrap();
        let b = simulate_dataset(
            &spec,
            &GridCell {
                clusters_per_area: 10,
                y2: 0.30,
                sigma2_y2: 0.0001,
            },
            2,
        )
        .unwrap();
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn replicates_and_cluster_counts_change_the_data() {
        let spec = SimulationSpec::default();
        let cell = GridCell {
            clusters_per_area: 10,
            y2: 0.29,
            sigma2_y2: 0.01,
        };
        let a = simulate_dataset(&spec, &cell, 0).unwrap();
        let b = simulate_dataset(&spec, &cell, 1).unwrap();
        assert_ne!(a.records(), b.records());
        let wide = simulate_dataset(
            &spec,
            &GridCell {
                clusters_per_area: 5,
                ..cell
            },
            0,
        )
        .unwrap();
        assert_ne!(&a.records()[..45], wide.records());
    }

    #[test]
    fn degenerate_prevalences_pin_the_counts() {
        let spec = SimulationSpec {
            n_areas: 2,
            area_probs: vec![0.0, 1.0],
            clusters_per_area: vec![4],
            ..SimulationSpec::default()
        };
        let cell = GridCell {
            clusters_per_area: 4,
            y2: 0.29,
            sigma2_y2: 0.01,
        };
        let data = simulate_dataset(&spec, &cell, 0).unwrap();
        for r in data.records() {
            let want = if r.area == 0 {
                0
            } else {
                spec.trials_per_cluster
            };
            assert_eq!(r.successes, want);
        }
    }

    #[test]
    fn area_totals_sit_inside_the_binomial_envelope() {
        let spec = SimulationSpec::default();
        let cell = GridCell {
            clusters_per_area: 100,
            y2: 0.29,
            sigma2_y2: 0.01,
        };
        for replicate in 0..3 {
            let data = simulate_dataset(&spec, &cell, replicate).unwrap();
            for (area, &p) in spec.area_probs.iter().enumerate() {
                let total: u64 = data
                    .records()
                    .iter()
                    .filter(|r| r.area == area)
                    .map(|r| r.successes)
                    .sum();
                let n = (cell.clusters_per_area as u64 * spec.trials_per_cluster) as f64;
                let mean = n * p;
                let sd = (n * p * (1.0 - p)).sqrt();
                assert!(
                    (total as f64 - mean).abs() < 4.0 * sd,
                    "area {area} total {total} outside {mean} +- 4*{sd}"
                );
            }
        }
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let spec = SimulationSpec::default();
        let cell = GridCell {
            clusters_per_area: 10,
            y2: 0.29,
            sigma2_y2: 0.01,
        };
        assert!(simulate_dataset(&spec, &cell, 10).is_err());
        let bad = SimulationSpec {
            area_probs: vec![0.5; 4],
            ..SimulationSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationSpec {
            area_probs: {
                let mut p = SimulationSpec::default().area_probs;
                p[0] = 1.5;
                p
            },
            ..SimulationSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(GridCell {
            clusters_per_area: 0,
            y2: 0.29,
            sigma2_y2: 0.01
        }
        .validate()
        .is_err());
        assert!(GridCell {
            clusters_per_area: 5,
            y2: 0.29,
            sigma2_y2: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn seed_derivation_separates_coordinates() {
        let a = derive_seed(&[TAG_DATA, 10, 0]);
        let b = derive_seed(&[TAG_DATA, 10, 1]);
        let c = derive_seed(&[TAG_DATA, 1000, 0]);
        let d = derive_seed(&[TAG_FREE_FIT, 10, 0]);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, derive_seed(&[TAG_DATA, 10, 0]));
    }
}
