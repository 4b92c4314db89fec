//! `conic-purge`: generate synthetic data, detect outliers, sweep
//! experiment parameters.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when the
//! numbers themselves defeat the pipeline (degenerate bandwidth, singular
//! fits and the like).

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use conic_purge::prelude::*;
use serde_json::json;

#[derive(Parser)]
#[command(name = "conic-purge", version, about = "Two-stage outlier elimination for ellipse and ellipsoid fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset described by a JSON experiment config.
    Generate { config: PathBuf, out: PathBuf },
    /// Label outliers in a dataset CSV and fit a model to the rest.
    Detect(DetectArgs),
    /// Run a parameter sweep and write one aggregated row per grid point
    /// and pipeline.
    Sweep { spec: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Proximity,
    Model,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Ransac,
    Plain,
}

#[derive(clap::Args)]
struct DetectArgs {
    /// CSV with x, y[, z] columns and an optional label column.
    data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageArg,
    /// Interval width multiplier of the 1-D detector.
    #[arg(long)]
    gamma: Option<f64>,
    /// Bandwidth rank multiplier.
    #[arg(long)]
    p: Option<usize>,
    /// Eigenvalue cutoff for candidate eigenvectors.
    #[arg(long)]
    eig_threshold: Option<f64>,
    /// High-frequency measure cutoff for candidate eigenvectors.
    #[arg(long)]
    hf_threshold: Option<f64>,
    /// Multiplier on the robust deviation scale that sets the inlier band.
    #[arg(long)]
    tau_scale: Option<f64>,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run a baseline instead of the elimination stages.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// RANSAC trial count.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Starting labels for the model stage (index,label,stage CSV).
    #[arg(long)]
    init_labels: Option<PathBuf>,
    /// Write final labels (index,label,stage CSV).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Write the fitted model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Write the generalized eigenvalues of the proximity graph.
    #[arg(long)]
    dump_spectrum: Option<PathBuf>,
    /// Write diagnostics for the eigenvectors the proximity stage used.
    #[arg(long)]
    dump_eligible: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Generate { config, out } => generate(&config, &out),
        Command::Detect(args) => detect(&args),
        Command::Sweep { spec, out } => sweep(&spec, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_numerical() => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CONIC_PURGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("CONIC_PURGE_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn generate(config: &std::path::Path, out: &std::path::Path) -> Result<()> {
    let cfg: ExperimentConfig = io::read_json(config)?;
    let data = make_dataset(&cfg)?;
    io::write_dataset(out, &data.points, &data.truth)
}

fn sweep(spec: &std::path::Path, out: &std::path::Path) -> Result<()> {
    let spec: SweepSpec = io::read_json(spec)?;
    let rows = run_sweep(&spec)?;
    io::write_sweep(out, &rows)
}

struct Detection {
    labels: DetectionLabels,
    model: FittedModel,
    iterations: Option<usize>,
    converged: Option<bool>,
    proximity: Option<ProximityReport>,
}

fn detect(args: &DetectArgs) -> Result<()> {
    let data = io::read_dataset(&args.data)?;
    let points = &data.points;

    let mut prox = EligibilityConfig::default();
    if let Some(g) = args.gamma {
        prox.gamma = g;
    }
    if let Some(p) = args.p {
        prox.p = p;
    }
    if let Some(e) = args.eig_threshold {
        prox.eig_threshold = e;
    }
    if let Some(h) = args.hf_threshold {
        prox.hf_threshold = h;
    }
    let mut refine_cfg = RefineConfig { seed: args.seed, ..RefineConfig::default() };
    let mut ransac = RansacConfig { iterations: args.k, seed: args.seed, ..RansacConfig::default() };
    if let Some(t) = args.tau_scale {
        refine_cfg.tau_scale = t;
        ransac.tau_scale = t;
    }

    let run = match (args.baseline, args.stage) {
        (Some(Baseline::Ransac), _) => from_fit(vanilla_ransac(points, &ransac)?),
        (Some(Baseline::Plain), _) => Detection {
            labels: DetectionLabels::all_inliers(points.len(), Stage::Model),
            model: fit_model(points, None)?,
            iterations: None,
            converged: None,
            proximity: None,
        },
        (None, StageArg::Proximity) => {
            let report = proximity_stage_report(points, &prox, args.seed)?;
            let model = fit_model(points, Some(&report.labels.inlier_mask()))?;
            Detection { labels: report.labels.clone(), model, iterations: None, converged: None, proximity: Some(report) }
        }
        (None, StageArg::Model) => {
            let initial = match &args.init_labels {
                Some(path) => io::read_labels(path, points.len())?,
                None => DetectionLabels::all_inliers(points.len(), Stage::Model),
            };
            from_fit(refine(points, &initial, &refine_cfg)?)
        }
        (None, StageArg::Both) => {
            let out = two_stage(points, &prox, &refine_cfg, args.seed)?;
            Detection { proximity: Some(out.proximity), ..from_fit(out.fit) }
        }
    };

    if let Some(report) = &run.proximity {
        if let Some(path) = &args.dump_spectrum {
            io::write_spectrum(path, &report.eigenvalues)?;
        }
        if let Some(path) = &args.dump_eligible {
            io::write_eligible(path, &report.eligible)?;
        }
    } else if args.dump_spectrum.is_some() || args.dump_eligible.is_some() {
        log::warn!("spectrum dumps need the proximity stage; nothing written");
    }
    if let Some(path) = &args.labels_out {
        io::write_labels(path, &run.labels)?;
    }
    if let Some(path) = &args.model_out {
        io::write_model(path, &run.model)?;
    }

    let metrics = match &data.truth {
        Some(truth) => Some(detection_metrics(&run.labels, truth)?),
        None => None,
    };
    let summary = json!({
        "points": points.len(),
        "dim": points.dim(),
        "outliers": run.labels.outlier_count(),
        "iterations": run.iterations,
        "converged": run.converged,
        "bandwidth": run.proximity.as_ref().map(|r| r.bandwidth),
        "eligible_vectors": run.proximity.as_ref().map(|r| r.eligible.len()),
        "metrics": metrics,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn from_fit(fit: FitResult) -> Detection {
    Detection {
        labels: fit.labels,
        model: fit.model,
        iterations: Some(fit.iterations),
        converged: Some(fit.converged),
        proximity: None,
    }
}
