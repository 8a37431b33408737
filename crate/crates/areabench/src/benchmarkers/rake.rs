//! Raking: rescale every draw by the ratio of the weighted posterior
//! median total to the benchmark value.
//!
//! The raking factor `R = (sum_i w_i median_i) / y2` is computed once
//! from the per-area posterior medians, and every draw of every area is
//! divided by it. Afterwards the weighted total of the raked medians
//! equals `y2` by construction, all quantiles scale by `1/R` (so
//! interval widths do too), and area rankings are unchanged. Draws that
//! raking would push to 1 or beyond are an error: the output would not
//! be a prevalence, and no flagging can repair that.

use crate::error::{Error, Result};
use crate::types::{Benchmark, BenchmarkResult, DrawMatrix, Method};

/// Rake `draws` to the benchmark total. Fails with
/// [`Error::RakedOutOfRange`] if any raked draw would reach 1.
pub fn rake_benchmark(draws: &DrawMatrix, bench: &Benchmark) -> Result<BenchmarkResult> {
    if draws.n_areas() != bench.n_areas() {
        return Err(Error::invalid(format!(
            "draws cover {} areas, benchmark {}",
            draws.n_areas(),
            bench.n_areas()
        )));
    }
    let medians = draws.area_medians();
    let total = bench.weighted_sum(&medians);
    if !(total > 0.0) {
        return Err(Error::invalid(format!(
            "raking needs a positive weighted median total, got {total}"
        )));
    }
    let factor = total / bench.y2();

    // Find every area that raking would push out of range before
    // building anything.
    let n = draws.n_areas();
    let offending: Vec<usize> = (0..n)
        .filter(|&a| (0..draws.n_draws()).any(|k| draws.theta_row(k)[a] / factor >= 1.0))
        .collect();
    if !offending.is_empty() {
        return Err(Error::RakedOutOfRange {
            areas: offending,
            factor,
        });
    }

    let raked = draws.map_theta(|_, row| row.iter().map(|t| t / factor).collect())?;
    Ok(BenchmarkResult {
        method: Method::Rake,
        draws: raked,
        acceptance_rate: None,
        flagged_rows: vec![],
        warnings: vec![],
    })
}
