//! Command-line driver for the benchmarking library.
//!
//! Subcommands cover the full pipeline: `simulate` clustered binomial
//! data, `fit` the unit-level spatial model, `benchmark` a posterior
//! against a national value by any of the five methods, `diagnose`
//! convergence of a draws file, and `report` to run the whole simulation
//! study and write its comparison tables.
//!
//! Every subcommand accepts `--config <file>` (plain text, `key = value`)
//! with command-line flags taking precedence over file values.  All
//! artifacts are files: datasets and draws as CSV, method metadata and
//! diagnostics as JSON.

mod config;

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use areabench::benchmarkers::{
    bayes_estimate, mh_benchmark, rake_benchmark, rejection_benchmark, BayesEstimateInputs,
    InterceptShiftPrior, MhConfig,
};
use areabench::diagnostics::{DiagnosticsReport, DiagnosticsThresholds};
use areabench::harness::{
    emit_report, run_cell, simulate_dataset, study_priors, timing_notes, CellReport, CellRunConfig,
    GridCell, SimulationSpec,
};
use areabench::inference::{fit_unit, fit_unit_joint, SamplerConfig};
use areabench::models::{ConstraintScale, InterceptPrior, Priors};
use areabench::spatial::AreaGraph;
use areabench::{io, logit, Benchmark, BenchmarkResult, DrawMatrix, Method};

use config::{resolve, Config};

#[derive(Parser)]
#[command(
    name = "areabench",
    version,
    about = "Fully Bayesian benchmarking of small-area prevalence estimates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a clustered binomial dataset from the study design.
    Simulate(SimulateArgs),
    /// Fit the unit-level spatial model and write posterior draws.
    Fit(FitArgs),
    /// Constrain a posterior to a national benchmark value.
    Benchmark(BenchmarkArgs),
    /// Convergence diagnostics for a draws file.
    Diagnose(DiagnoseArgs),
    /// Run the simulation study and write its report tables.
    Report(ReportArgs),
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Fit(a) => fit(a),
        Cmd::Benchmark(a) => benchmark(a),
        Cmd::Diagnose(a) => diagnose(a),
        Cmd::Report(a) => report(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::empty()),
    }
}

/// The bundled nine-area adjacency, or a custom one from a file.
fn load_graph(graph: &Option<PathBuf>, n_areas: usize) -> Result<AreaGraph> {
    let g = match graph {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading graph {}", path.display()))?;
            AreaGraph::parse(&text)?
        }
        None => {
            if n_areas != 9 {
                bail!(
                    "the bundled adjacency covers nine areas but the data has {n_areas}; \
                     pass --graph with a matching adjacency file"
                );
            }
            AreaGraph::south_africa_provinces()
        }
    };
    if g.n_areas() != n_areas {
        bail!("graph has {} areas but the data has {n_areas}", g.n_areas());
    }
    Ok(g)
}

// ---------------------------------------------------------------- simulate

#[derive(Args)]
struct SimulateArgs {
    /// Plain-text config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path for the dataset.
    #[arg(long)]
    out: PathBuf,
    /// Clusters per area.
    #[arg(long)]
    clusters: Option<usize>,
    /// Replicate index within the cell (changes the RNG stream).
    #[arg(long)]
    replicate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Binomial trials per cluster.
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated per-area prevalences.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let defaults = SimulationSpec::default();
    let probs = resolve(args.probs, cfg.get_list("probs")?, defaults.area_probs);
    let clusters_cfg = cfg
        .get_list::<usize>("clusters_per_area")?
        .and_then(|v| v.into_iter().next());
    let clusters = resolve(args.clusters, clusters_cfg, 10);
    let replicate = args.replicate.unwrap_or(0);
    let spec = SimulationSpec {
        n_areas: probs.len(),
        area_probs: probs,
        trials_per_cluster: resolve(args.trials, cfg.get("trials_per_cluster")?, 100),
        clusters_per_area: vec![clusters],
        replicates: replicate + 1,
        seed: resolve(args.seed, cfg.get("seed")?, defaults.seed),
        ..defaults
    };
    // The benchmark coordinates never touch the data stream; any valid
    // pair completes the cell.
    let cell = GridCell {
        clusters_per_area: clusters,
        y2: spec.y2_values[0],
        sigma2_y2: spec.sigma2_y2_values[0],
    };
    let data = simulate_dataset(&spec, &cell, replicate)?;
    io::write_dataset(&args.out, &data)?;
    println!(
        "wrote {} ({} areas, {} clusters, replicate {replicate}, seed {})",
        args.out.display(),
        data.n_areas(),
        data.records().len(),
        spec.seed
    );
    Ok(())
}

// --------------------------------------------------------------------- fit

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV produced by `simulate` (or hand-written).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path for the posterior draws.
    #[arg(long)]
    out: PathBuf,
    /// Adjacency file; defaults to the bundled nine-area graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Retained draws per chain.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the simulation study's hyperpriors (loggamma cluster precision)
    /// instead of the PC-prior defaults.
    #[arg(long)]
    study_priors: bool,
    /// Center the intercept prior on logit of this value (the shifted
    /// refit that feeds `benchmark --method mh`).
    #[arg(long)]
    shift_to_y2: Option<f64>,
    /// Variance of the shifted intercept prior.
    #[arg(long)]
    shift_variance: Option<f64>,
}

fn sampler_config(
    cfg: &Config,
    chains: Option<usize>,
    warmup: Option<usize>,
    draws: Option<usize>,
    seed: Option<u64>,
    draws_key: &str,
) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    Ok(SamplerConfig {
        n_chains: resolve(chains, cfg.get("chains")?, d.n_chains),
        n_warmup: resolve(warmup, cfg.get("warmup")?, d.n_warmup),
        n_draws: resolve(draws, cfg.get(draws_key)?, d.n_draws),
        seed: resolve(seed, cfg.get("seed")?, d.seed),
        ..d
    })
}

fn base_priors(cfg: &Config, study_flag: bool) -> Result<Priors> {
    let use_study = study_flag || cfg.get("study_priors")?.unwrap_or(false);
    Ok(if use_study {
        study_priors()
    } else {
        Priors::default_unit()
    })
}

fn fit(args: FitArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let data = io::read_dataset(&args.data, None)?;
    let graph = load_graph(&args.graph, data.n_areas())?;
    let scfg = sampler_config(
        &cfg,
        args.chains,
        args.warmup,
        args.draws,
        args.seed,
        "draws",
    )?;

    let mut priors = base_priors(&cfg, args.study_priors)?;
    if let Some(y2) = args.shift_to_y2 {
        let variance = resolve(
            args.shift_variance,
            cfg.get("shift_variance")?,
            0.1_f64.sqrt(),
        );
        let shift = InterceptShiftPrior::new(logit(y2)?, variance)?;
        priors.intercept = InterceptPrior::Normal {
            mean: shift.mean(),
            variance: shift.variance(),
        };
    } else if args.shift_variance.is_some() {
        bail!("--shift-variance only makes sense together with --shift-to-y2");
    }

    let draws = fit_unit(&data, &graph, &priors, &scfg)?;
    io::write_draws(&args.out, &draws, Some(scfg.seed))?;
    println!(
        "wrote {} ({} chains x {} draws over {} areas)",
        args.out.display(),
        draws.n_chains(),
        draws.n_draws() / draws.n_chains(),
        draws.n_areas()
    );
    Ok(())
}

// --------------------------------------------------------------- benchmark

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of: rejection, mh, rake, bayes, joint.
    #[arg(long)]
    method: String,
    /// Input draws CSV (rejection, mh, rake, bayes).  For mh this must be
    /// the shifted refit written by `fit --shift-to-y2`.
    #[arg(long)]
    draws: Option<PathBuf>,
    /// Input dataset CSV (joint refits the model from data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Adjacency file for --method joint with a non-bundled graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output CSV for the benchmarked draws (not available for bayes).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON metadata report here instead of standard output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// National benchmark value.
    #[arg(long)]
    y2: Option<f64>,
    /// Benchmark variance.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Comma-separated area weights; defaults to equal weights.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Accepted-draw target for rejection (stops early once reached).
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Retained draws per chain (mh, joint).
    #[arg(long)]
    keep: Option<usize>,
    /// Shift-prior variance used when the mh input pool was fit.
    #[arg(long)]
    shift_variance: Option<f64>,
    /// Loss-function sharpness for bayes; omitted = exact constraint.
    #[arg(long)]
    lambda: Option<f64>,
    /// Use the simulation study's hyperpriors for the joint refit.
    #[arg(long)]
    study_priors: bool,
}

fn read_pool(path: &Option<PathBuf>, method: Method) -> Result<DrawMatrix> {
    let Some(path) = path else {
        bail!("--method {} needs --draws <pool.csv>", method.name());
    };
    Ok(io::read_draws(path)?.0)
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let method = Method::from_str(&args.method)?;
    if let (Some(out), Some(json)) = (&args.out, &args.json) {
        if *json == PathBuf::from(format!("{}.json", out.display())) {
            bail!(
                "--json {} would overwrite the sidecar of --out {}; pick another path",
                json.display(),
                out.display()
            );
        }
    }
    let Some(y2) = args.y2.or(cfg.get("y2")?) else {
        bail!("benchmark needs --y2 (or `y2` in the config)");
    };
    let Some(sigma2) = args.sigma2.or(cfg.get("sigma2_y2")?) else {
        bail!("benchmark needs --sigma2 (or `sigma2_y2` in the config)");
    };
    let weights = resolve(args.weights.clone(), cfg.get_list("weights")?, Vec::new());
    let bench_for = |n_areas: usize| -> Result<Benchmark> {
        Ok(if weights.is_empty() {
            Benchmark::equal_weights(y2, sigma2, n_areas)?
        } else {
            Benchmark::new(y2, sigma2, weights.clone())?
        })
    };
    let seed = resolve(args.seed, cfg.get("seed")?, 1);

    let result: BenchmarkResult = match method {
        Method::Rejection => {
            let pool = read_pool(&args.draws, method)?;
            let bench = bench_for(pool.n_areas())?;
            let target = args.target.or(cfg.get("target")?);
            rejection_benchmark(&pool, &bench, target, seed)?
        }
        Method::Mh => {
            let pool = read_pool(&args.draws, method)?;
            let bench = bench_for(pool.n_areas())?;
            let variance = resolve(
                args.shift_variance,
                cfg.get("shift_variance")?,
                0.1_f64.sqrt(),
            );
            let shift = InterceptShiftPrior::for_benchmark(&bench, variance)?;
            let d = MhConfig::default();
            let mcfg = MhConfig {
                n_chains: resolve(args.chains, cfg.get("chains")?, d.n_chains),
                n_warmup: resolve(args.warmup, cfg.get("warmup")?, d.n_warmup),
                n_draws: resolve(args.keep, cfg.get("keep")?, d.n_draws),
                ..d
            };
            mh_benchmark(&pool, &bench, &shift, &mcfg, seed)?
        }
        Method::Rake => {
            let pool = read_pool(&args.draws, method)?;
            let bench = bench_for(pool.n_areas())?;
            rake_benchmark(&pool, &bench)?
        }
        Method::Bayes => {
            let pool = read_pool(&args.draws, method)?;
            let bench = bench_for(pool.n_areas())?;
            return bayes_report(&args, &pool, &bench);
        }
        Method::Joint => {
            let Some(data_path) = &args.data else {
                bail!("--method joint refits from data: pass --data <dataset.csv>");
            };
            let data = io::read_dataset(data_path, None)?;
            let graph = load_graph(&args.graph, data.n_areas())?;
            let bench = bench_for(data.n_areas())?;
            let priors = base_priors(&cfg, args.study_priors)?;
            let scfg =
                sampler_config(&cfg, args.chains, args.warmup, args.keep, args.seed, "keep")?;
            let draws = fit_unit_joint(
                &data,
                &graph,
                &priors,
                &bench,
                ConstraintScale::Marginalized,
                &scfg,
            )?;
            BenchmarkResult {
                method: Method::Joint,
                draws,
                acceptance_rate: None,
                flagged_rows: Vec::new(),
                warnings: Vec::new(),
            }
        }
        Method::Project => bail!("projection is a library-only transformation, not a study method"),
    };

    let bench = bench_for(result.draws.n_areas())?;
    let meta = serde_json::json!({
        "method": result.method.name(),
        "n_areas": result.draws.n_areas(),
        "n_draws": result.draws.n_draws(),
        "acceptance_rate": result.acceptance_rate,
        "weighted_mean": mean(&result.draws.weighted_sums(bench.weights())),
        "area_means": result.draws.area_means(),
        "area_medians": result.draws.area_medians(),
        "flagged_rows": result.flagged_rows,
        "warnings": result.warnings,
    });
    if let Some(out) = &args.out {
        io::write_draws(out, &result.draws, Some(seed))?;
    }
    emit_json(&args.json, &meta)
}

fn bayes_report(args: &BenchmarkArgs, pool: &DrawMatrix, bench: &Benchmark) -> Result<()> {
    if args.out.is_some() {
        bail!("--method bayes produces point estimates, not draws; use --json for the output");
    }
    let inputs = match args.lambda {
        Some(lambda) => BayesEstimateInputs::new(pool.area_means(), bench.clone(), lambda)?,
        None => BayesEstimateInputs::exact(pool.area_means(), bench.clone())?,
    };
    let est = bayes_estimate(&inputs);
    let meta = serde_json::json!({
        "method": Method::Bayes.name(),
        "n_areas": bench.n_areas(),
        "estimates": est.estimates,
        "weighted_mean": bench.weighted_sum(&est.estimates),
        "out_of_range": est.out_of_range,
        "unbenchmarked_means": pool.area_means(),
    });
    emit_json(&args.json, &meta)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn emit_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
            println!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------- diagnose

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Draws CSV to diagnose.
    #[arg(long)]
    draws: PathBuf,
    /// R-hat threshold above which a scalar is flagged.
    #[arg(long)]
    max_rhat: Option<f64>,
    /// Bulk-ESS threshold below which a scalar is flagged.
    #[arg(long)]
    min_ess: Option<f64>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 when any scalar fails a threshold.
    #[arg(long)]
    strict: bool,
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let (draws, _) = io::read_draws(&args.draws)?;
    let d = DiagnosticsThresholds::default();
    let thresholds = DiagnosticsThresholds {
        max_rhat: resolve(args.max_rhat, cfg.get("max_rhat")?, d.max_rhat),
        min_ess: resolve(args.min_ess, cfg.get("min_ess")?, d.min_ess),
    };
    let report = DiagnosticsReport::for_draws(&draws, thresholds)?;
    let text = report.to_json()?;
    match &args.out {
        Some(p) => {
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
            println!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    eprintln!(
        "worst R-hat {:.4}, smallest bulk ESS {:.1}, {}",
        report.worst_rhat(),
        report.min_bulk_ess(),
        if report.all_ok { "all ok" } else { "FLAGGED" }
    );
    if args.strict && !report.all_ok {
        std::process::exit(2);
    }
    Ok(())
}

// ------------------------------------------------------------------ report

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory the report tables are written into.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated methods to run (default: all five).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Run the full grid instead of the default benchmark-value slice.
    #[arg(long)]
    full_grid: bool,
    /// Comma-separated clusters-per-area axis.
    #[arg(long, value_delimiter = ',')]
    clusters: Option<Vec<usize>>,
    /// Comma-separated benchmark-value axis.
    #[arg(long, value_delimiter = ',')]
    y2: Option<Vec<f64>>,
    /// Comma-separated benchmark-variance axis.
    #[arg(long, value_delimiter = ',')]
    sigma2: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated per-area prevalences.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
    #[arg(long)]
    rejection_target: Option<usize>,
    #[arg(long)]
    ess_target: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Draws per chain for one-shot pool fits.
    #[arg(long)]
    pool_draws: Option<usize>,
    /// Draws per chain added per sampling increment.
    #[arg(long)]
    increment: Option<usize>,
    #[arg(long)]
    max_increments: Option<usize>,
    #[arg(long)]
    shift_variance: Option<f64>,
    /// Run cells and replicates on the worker pool.
    #[arg(long)]
    parallel: bool,
    /// Progress lines to standard error.
    #[arg(long)]
    progress: bool,
}

fn report(args: ReportArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let sd = SimulationSpec::default();
    let probs = resolve(args.probs, cfg.get_list("probs")?, sd.area_probs);
    let spec = SimulationSpec {
        n_areas: probs.len(),
        area_probs: probs,
        trials_per_cluster: resolve(args.trials, cfg.get("trials_per_cluster")?, 100),
        clusters_per_area: resolve(
            args.clusters,
            cfg.get_list("clusters_per_area")?,
            sd.clusters_per_area,
        ),
        y2_values: resolve(args.y2, cfg.get_list("y2")?, sd.y2_values),
        sigma2_y2_values: resolve(args.sigma2, cfg.get_list("sigma2_y2")?, sd.sigma2_y2_values),
        replicates: resolve(args.replicates, cfg.get("replicates")?, sd.replicates),
        seed: resolve(args.seed, cfg.get("seed")?, sd.seed),
    };
    let cd = CellRunConfig::default();
    let parallel = args.parallel || cfg.get("parallel")?.unwrap_or(false);
    let run_cfg = CellRunConfig {
        rejection_target: resolve(
            args.rejection_target,
            cfg.get("rejection_target")?,
            cd.rejection_target,
        ),
        ess_target: resolve(args.ess_target, cfg.get("ess_target")?, cd.ess_target),
        n_chains: resolve(args.chains, cfg.get("chains")?, cd.n_chains),
        n_warmup: resolve(args.warmup, cfg.get("warmup")?, cd.n_warmup),
        pool_draws_per_chain: resolve(
            args.pool_draws,
            cfg.get("pool_draws")?,
            cd.pool_draws_per_chain,
        ),
        increment_draws: resolve(
            args.increment,
            cfg.get("increment_draws")?,
            cd.increment_draws,
        ),
        max_increments: resolve(
            args.max_increments,
            cfg.get("max_increments")?,
            cd.max_increments,
        ),
        mh_shift_variance: resolve(
            args.shift_variance,
            cfg.get("shift_variance")?,
            cd.mh_shift_variance,
        ),
        parallel_replicates: parallel,
        progress: args.progress || cfg.get("progress")?.unwrap_or(false),
    };

    let methods = match resolve(args.methods, cfg.get_list("methods")?, Vec::new()) {
        names if names.is_empty() => vec![
            Method::Rejection,
            Method::Mh,
            Method::Joint,
            Method::Rake,
            Method::Bayes,
        ],
        names => names
            .iter()
            .map(|n| Method::from_str(n))
            .collect::<areabench::Result<Vec<Method>>>()?,
    };

    let full_grid = args.full_grid || cfg.get("full_grid")?.unwrap_or(false);
    let cells = if full_grid {
        spec.cells()
    } else {
        spec.default_run_cells()
    };
    if run_cfg.progress {
        eprintln!(
            "running {} cells x {} replicates with methods {:?}",
            cells.len(),
            spec.replicates,
            methods.iter().map(Method::name).collect::<Vec<_>>()
        );
    }

    let run = |cell: &GridCell| run_cell(&spec, cell, &methods, &run_cfg);
    let reports: Vec<CellReport> = if parallel {
        cells
            .par_iter()
            .map(run)
            .collect::<areabench::Result<_>>()?
    } else {
        cells.iter().map(run).collect::<areabench::Result<_>>()?
    };

    let paths = emit_report(&reports, &args.out)?;
    for p in [
        &paths.results,
        &paths.summaries,
        &paths.ks,
        &paths.timings,
        &paths.notes,
    ] {
        println!("wrote {}", p.display());
    }
    for line in timing_notes(&reports) {
        println!("{line}");
    }
    Ok(())
}
