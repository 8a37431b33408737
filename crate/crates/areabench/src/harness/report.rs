//! Report files for a study run.
//!
//! Four CSV tables plus a plain-text notes file are written into one
//! directory:
//!
//! * `results.csv` — one row per (cell, replicate, method) with the
//!   stopping-rule outcome, acceptance rate, bulk ESS, draw count, the
//!   benchmarked and unbenchmarked weighted means, warnings and errors.
//! * `summaries.csv` — per-area posterior medians and means, long format.
//! * `ks.csv` — pairwise per-area KS statistics between the fully
//!   Bayesian methods.
//! * `timings.csv` — wall-clock seconds per method run.
//! * `notes.txt` — qualitative timing-ordering checks (see
//!   [`timing_notes`]).
//!
//! Everything in the first three tables is a deterministic function of the
//! study configuration and seed, so identical runs reproduce those files
//! byte for byte.  `timings.csv` and `notes.txt` depend on wall clocks and
//! are exempt from that guarantee.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::Method;

use super::cell::{CellReport, MethodRecord};

/// Locations of the files one [`emit_report`] call wrote.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub results: PathBuf,
    pub summaries: PathBuf,
    pub ks: PathBuf,
    pub timings: PathBuf,
    pub notes: PathBuf,
}

/// Quote a CSV field only when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

/// Cell coordinate prefix shared by every table.
fn cell_prefix(report: &CellReport, replicate: usize) -> String {
    let c = &report.cell;
    format!(
        "{},{},{},{},{}",
        c.label(),
        c.clusters_per_area,
        c.y2,
        c.sigma2_y2,
        replicate
    )
}

/// Write all report files into `dir`, creating it if needed.
pub fn emit_report(reports: &[CellReport], dir: &Path) -> Result<ReportPaths> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to report: no cells were run"));
    }
    fs::create_dir_all(dir)?;
    let paths = ReportPaths {
        results: dir.join("results.csv"),
        summaries: dir.join("summaries.csv"),
        ks: dir.join("ks.csv"),
        timings: dir.join("timings.csv"),
        notes: dir.join("notes.txt"),
    };

    let mut results = BufWriter::new(File::create(&paths.results)?);
    writeln!(
        results,
        "cell,clusters_per_area,y2,sigma2_y2,replicate,method,acceptance_rate,bulk_ess,\
         reached_target,n_draws,weighted_mean,free_weighted_mean,warnings,error"
    )?;
    let mut summaries = BufWriter::new(File::create(&paths.summaries)?);
    writeln!(
        summaries,
        "cell,clusters_per_area,y2,sigma2_y2,replicate,method,area,median,mean"
    )?;
    let mut ks = BufWriter::new(File::create(&paths.ks)?);
    writeln!(
        ks,
        "cell,clusters_per_area,y2,sigma2_y2,replicate,method_a,method_b,area,ks"
    )?;
    let mut timings = BufWriter::new(File::create(&paths.timings)?);
    writeln!(
        timings,
        "cell,clusters_per_area,y2,sigma2_y2,replicate,method,seconds,reached_target"
    )?;

    for report in reports {
        for rep in &report.replicates {
            let prefix = cell_prefix(report, rep.replicate);
            for rec in &rep.records {
                writeln!(
                    results,
                    "{},{},{},{},{},{},{},{},{},{}",
                    prefix,
                    rec.method.name(),
                    opt_f64(rec.acceptance_rate),
                    opt_f64(rec.bulk_ess),
                    opt_bool(rec.reached_target),
                    opt_usize(rec.n_draws),
                    opt_f64(rec.weighted_mean),
                    opt_f64(rep.free_weighted_mean),
                    csv_field(&rec.warnings.join("; ")),
                    csv_field(rec.error.as_deref().unwrap_or_default()),
                )?;
                for (area, (med, mean)) in rec.area_medians.iter().zip(&rec.area_means).enumerate()
                {
                    writeln!(
                        summaries,
                        "{},{},{},{},{}",
                        prefix,
                        rec.method.name(),
                        area,
                        med,
                        mean
                    )?;
                }
                writeln!(
                    timings,
                    "{},{},{},{}",
                    prefix,
                    rec.method.name(),
                    rec.seconds,
                    opt_bool(rec.reached_target)
                )?;
            }
            for k in &rep.ks {
                writeln!(
                    ks,
                    "{},{},{},{},{}",
                    prefix,
                    k.method_a.name(),
                    k.method_b.name(),
                    k.area,
                    k.statistic
                )?;
            }
        }
    }
    results.flush()?;
    summaries.flush()?;
    ks.flush()?;
    timings.flush()?;

    let mut notes = BufWriter::new(File::create(&paths.notes)?);
    for line in timing_notes(reports) {
        writeln!(notes, "{line}")?;
    }
    notes.flush()?;

    Ok(paths)
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Successful records of one method across a cell's replicates.
fn successful_seconds(report: &CellReport, method: Method) -> Vec<f64> {
    report
        .replicates
        .iter()
        .flat_map(|rep| &rep.records)
        .filter(|r| r.method == method && r.error.is_none())
        .map(|r: &MethodRecord| r.seconds)
        .collect()
}

/// Qualitative timing-ordering checks, one line per cell that ran both
/// rejection and MH.
///
/// The expectation being checked: with a tight benchmark variance the
/// rejection filter keeps almost nothing and MH should win; with a loose
/// one rejection's cheap filtering should win.  These orderings are
/// logged, not asserted — absolute timings depend on the machine.
pub fn timing_notes(reports: &[CellReport]) -> Vec<String> {
    let mut notes = Vec::new();
    for report in reports {
        let any_attempt = report.replicates.iter().any(|rep| {
            rep.records
                .iter()
                .any(|r| matches!(r.method, Method::Rejection | Method::Mh))
        });
        if !any_attempt {
            continue;
        }
        let mut rejection = successful_seconds(report, Method::Rejection);
        let mut mh = successful_seconds(report, Method::Mh);
        let label = report.cell.label();
        if rejection.is_empty() || mh.is_empty() {
            notes.push(format!(
                "cell {label}: not enough successful rejection/MH runs to compare timings"
            ));
            continue;
        }
        let rej_med = median(&mut rejection);
        let mh_med = median(&mut mh);
        let expect_mh_faster = report.cell.sigma2_y2 < 1e-3;
        let holds = if expect_mh_faster {
            mh_med < rej_med
        } else {
            rej_med < mh_med
        };
        notes.push(format!(
            "cell {label}: median rejection {rej_med:.3}s vs MH {mh_med:.3}s - expected {} faster at sigma2_y2 = {}: {}",
            if expect_mh_faster { "MH" } else { "rejection" },
            report.cell.sigma2_y2,
            if holds { "holds" } else { "does not hold" }
        ));
    }
    notes
}
