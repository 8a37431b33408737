//! File formats for pipeline artifacts.
//!
//! * Draw matrices: CSV in long form (`chain,draw,area,theta[,eta,beta0,<hypers>]`),
//!   one row per draw and area, floats written with 17 significant digits so a
//!   write/read cycle is bit-exact; a JSON sidecar next to the CSV records the
//!   area count, hyperparameter names, link, and RNG seed.
//! * Cluster datasets: CSV `area,trials,successes`.
//! * Benchmarks: JSON with the value, variance, and weight vector.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{Benchmark, ClusterDataset, ClusterRecord, DrawMatrix, Internals, LinkKind};

/// Formats a float with 17 significant digits; parsing the result
/// recovers the identical bit pattern.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// Appends rather than swapping the extension so the sidecar of `x.csv`
// (`x.csv.json`) can never collide with a report the caller chooses to
// write at `x.json`.
fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DrawSidecar {
    n_areas: usize,
    hypers: Vec<String>,
    seed: Option<u64>,
    link: Option<LinkKind>,
}

/// Writes a draw matrix as CSV plus its JSON sidecar. `seed` records the
/// RNG seed of the run that produced the draws (when there was one).
pub fn write_draws(path: &Path, draws: &DrawMatrix, seed: Option<u64>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let internals = draws.internals();
    let hyper_names: Vec<String> = internals
        .map(|i| i.hypers.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();

    let mut header = String::from("chain,draw,area,theta");
    if internals.is_some() {
        header.push_str(",eta,beta0");
        for name in &hyper_names {
            header.push(',');
            header.push_str(name);
        }
    }
    writeln!(w, "{header}")?;

    let n = draws.n_areas();
    for k in 0..draws.n_draws() {
        let chain = draws.chain_ids()[k];
        for a in 0..n {
            let theta = draws.theta_row(k)[a];
            match internals {
                None => writeln!(w, "{chain},{k},{a},{}", fmt_f64(theta))?,
                Some(i) => {
                    let mut line = format!(
                        "{chain},{k},{a},{},{},{}",
                        fmt_f64(theta),
                        fmt_f64(i.eta[k * n + a]),
                        fmt_f64(i.beta0[k])
                    );
                    for (_, col) in &i.hypers {
                        line.push(',');
                        line.push_str(&fmt_f64(col[k]));
                    }
                    writeln!(w, "{line}")?;
                }
            }
        }
    }
    w.flush()?;

    let sidecar = DrawSidecar {
        n_areas: n,
        hypers: hyper_names,
        seed,
        link: internals.map(|i| i.link),
    };
    let f = std::fs::File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &sidecar)
        .map_err(|e| Error::parse("draw sidecar", e.to_string()))?;
    Ok(())
}

/// Reads a draw matrix written by [`write_draws`], returning the draws
/// and the recorded seed.
pub fn read_draws(path: &Path) -> Result<(DrawMatrix, Option<u64>)> {
    let side: DrawSidecar = {
        let f = std::fs::File::open(sidecar_path(path))?;
        serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::parse("draw sidecar", e.to_string()))?
    };

    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("draws csv", "empty file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    let linked = match cols.as_slice() {
        ["chain", "draw", "area", "theta"] => false,
        ["chain", "draw", "area", "theta", "eta", "beta0", rest @ ..] => {
            let names: Vec<&str> = side.hypers.iter().map(|s| s.as_str()).collect();
            if rest != names.as_slice() {
                return Err(Error::parse(
                    "draws csv",
                    format!("hyperparameter columns {rest:?} do not match sidecar {names:?}"),
                ));
            }
            true
        }
        _ => {
            return Err(Error::parse(
                "draws csv",
                format!("unrecognized header {header:?}"),
            ))
        }
    };

    let n = side.n_areas;
    let mut chain_ids = Vec::new();
    let mut theta = Vec::new();
    let mut eta = Vec::new();
    let mut beta0 = Vec::new();
    let mut hyper_cols: Vec<Vec<f64>> = side.hypers.iter().map(|_| Vec::new()).collect();

    let parse_f = |s: &str, line_no: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::parse("draws csv", format!("bad float {s:?} on line {line_no}")))
    };
    let mut expected_area = 0usize;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        let want = if linked { 6 + side.hypers.len() } else { 4 };
        if fields.len() != want {
            return Err(Error::parse(
                "draws csv",
                format!("line {line_no}: {} fields, expected {want}", fields.len()),
            ));
        }
        let chain: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse("draws csv", format!("bad chain id on line {line_no}")))?;
        let area: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse("draws csv", format!("bad area id on line {line_no}")))?;
        if area != expected_area {
            return Err(Error::parse(
                "draws csv",
                format!("line {line_no}: area {area}, expected {expected_area}"),
            ));
        }
        expected_area = (expected_area + 1) % n;
        if area == 0 {
            chain_ids.push(chain);
            if linked {
                beta0.push(parse_f(fields[5], line_no)?);
                for (h, col) in hyper_cols.iter_mut().enumerate() {
                    col.push(parse_f(fields[6 + h], line_no)?);
                }
            }
        }
        theta.push(parse_f(fields[3], line_no)?);
        if linked {
            eta.push(parse_f(fields[4], line_no)?);
        }
    }
    if expected_area != 0 {
        return Err(Error::parse("draws csv", "file ends mid-draw"));
    }

    let draws = if linked {
        let link = side
            .link
            .ok_or_else(|| Error::parse("draw sidecar", "missing link for internals columns"))?;
        DrawMatrix::new_linked(
            n,
            chain_ids,
            theta,
            Internals {
                eta,
                beta0,
                hypers: side.hypers.iter().cloned().zip(hyper_cols).collect(),
                link,
            },
        )?
    } else {
        DrawMatrix::new_unlinked(n, chain_ids, theta)?
    };
    Ok((draws, side.seed))
}

/// Writes cluster data as `area,trials,successes` CSV.
pub fn write_dataset(path: &Path, data: &ClusterDataset) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "area,trials,successes")?;
    for r in data.records() {
        writeln!(w, "{},{},{}", r.area, r.trials, r.successes)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads cluster data written by [`write_dataset`]. The area count is
/// one past the largest area id unless a larger `n_areas` is given.
pub fn read_dataset(path: &Path, n_areas: Option<usize>) -> Result<ClusterDataset> {
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("dataset csv", "empty file"))??;
    if header != "area,trials,successes" {
        return Err(Error::parse(
            "dataset csv",
            format!("unrecognized header {header:?}"),
        ));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                "dataset csv",
                format!("line {}: expected 3 fields", idx + 2),
            ));
        }
        let bad = |what: &str| Error::parse("dataset csv", format!("line {}: bad {what}", idx + 2));
        records.push(ClusterRecord {
            area: fields[0].parse().map_err(|_| bad("area"))?,
            trials: fields[1].parse().map_err(|_| bad("trials"))?,
            successes: fields[2].parse().map_err(|_| bad("successes"))?,
        });
    }
    let inferred = records.iter().map(|r| r.area + 1).max().unwrap_or(0);
    ClusterDataset::new(n_areas.unwrap_or(inferred).max(inferred), records)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct BenchmarkFile {
    y2: f64,
    sigma2_y2: f64,
    weights: Vec<f64>,
}

/// Writes a benchmark specification as JSON.
pub fn write_benchmark(path: &Path, bench: &Benchmark) -> Result<()> {
    let file = BenchmarkFile {
        y2: bench.y2(),
        sigma2_y2: bench.sigma2_y2(),
        weights: bench.weights().to_vec(),
    };
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(f), &file)
        .map_err(|e| Error::parse("benchmark json", e.to_string()))?;
    Ok(())
}

/// Reads a benchmark specification, re-running construction validation.
pub fn read_benchmark(path: &Path) -> Result<Benchmark> {
    let f = std::fs::File::open(path)?;
    let file: BenchmarkFile = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::parse("benchmark json", e.to_string()))?;
    Benchmark::new(file.y2, file.sigma2_y2, file.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn float_format_is_bit_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let v: f64 = match rng.gen_range(0..3) {
                0 => rng.gen::<f64>(),
                1 => rng.gen::<f64>() * 1e-300,
                _ => (rng.gen::<f64>() - 0.5) * 1e12,
            };
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(
                v.to_bits(),
                back.to_bits(),
                "{v} reformatted as {}",
                fmt_f64(v)
            );
        }
    }

    fn random_linked(rng: &mut ChaCha12Rng, n_areas: usize, per_chain: &[usize]) -> DrawMatrix {
        let mut chain_ids = Vec::new();
        for (c, &k) in per_chain.iter().enumerate() {
            chain_ids.extend(std::iter::repeat(c).take(k));
        }
        let k = chain_ids.len();
        let eta: Vec<f64> = (0..k * n_areas).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        DrawMatrix::new_linked(
            n_areas,
            chain_ids,
            theta,
            Internals {
                eta,
                beta0: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                hypers: vec![
                    (
                        "tau_b".into(),
                        (0..k).map(|_| rng.gen_range(0.1..10.0)).collect(),
                    ),
                    (
                        "phi".into(),
                        (0..k).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    ),
                ],
                link: LinkKind::Logit,
            },
        )
        .unwrap()
    }

    #[test]
    fn draw_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for case in 0..20 {
            let m = random_linked(&mut rng, 1 + case % 4, &[3, 5]);
            let path = dir.path().join(format!("d{case}.csv"));
            write_draws(&path, &m, Some(42)).unwrap();
            let (back, seed) = read_draws(&path).unwrap();
            assert_eq!(seed, Some(42));
            assert_eq!(m, back, "case {case} round trip");
        }
    }

    #[test]
    fn unlinked_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DrawMatrix::new_unlinked(2, vec![0, 0, 1], vec![0.1, 0.9, 0.25, 0.5, 0.3, 0.71])
            .unwrap();
        let path = dir.path().join("u.csv");
        write_draws(&path, &m, None).unwrap();
        let (back, seed) = read_draws(&path).unwrap();
        assert_eq!(seed, None);
        assert_eq!(m, back);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("chain,draw,area,theta\n"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("bad.csv");
        std::fs::write(&csv, "chain,draw,area,theta\n0,0,0,0.5\n").unwrap();
        // Missing sidecar.
        assert!(read_draws(&csv).is_err());
        std::fs::write(
            sidecar_path(&csv),
            r#"{"n_areas":2,"hypers":[],"seed":null,"link":null}"#,
        )
        .unwrap();
        // File ends mid-draw for n_areas = 2.
        assert!(read_draws(&csv).is_err());
        std::fs::write(&csv, "wrong,header\n").unwrap();
        assert!(read_draws(&csv).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = ClusterDataset::new(
            3,
            vec![
                ClusterRecord {
                    area: 0,
                    trials: 100,
                    successes: 31,
                },
                ClusterRecord {
                    area: 2,
                    trials: 100,
                    successes: 28,
                },
            ],
        )
        .unwrap();
        let path = dir.path().join("data.csv");
        write_dataset(&path, &d).unwrap();
        let back = read_dataset(&path, Some(3)).unwrap();
        assert_eq!(d, back);
        // Without an explicit area count the largest id wins.
        let inferred = read_dataset(&path, None).unwrap();
        assert_eq!(inferred.n_areas(), 3);
    }

    #[test]
    fn benchmark_round_trip_revalidates() {
        let dir = tempfile::tempdir().unwrap();
        let b = Benchmark::equal_weights(0.29, 0.01, 9).unwrap();
        let path = dir.path().join("bench.json");
        write_benchmark(&path, &b).unwrap();
        assert_eq!(read_benchmark(&path).unwrap(), b);
        std::fs::write(&path, r#"{"y2":1.5,"sigma2_y2":0.01,"weights":[1.0]}"#).unwrap();
        assert!(read_benchmark(&path).is_err());
    }
}
