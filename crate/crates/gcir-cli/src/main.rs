//! Experiment runner for the generalized CIR laboratory.
//!
//! Exit codes: 0 all checks hold, 1 at least one verification violated,
//! 2 usage or configuration error.

// NaN-rejecting `!(x > 0.0)` guards mirror the library's validation style.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use config::{ConfigError, Experiment, ExperimentConfig, Manifest, ManifestMeta};
use experiments::RunOutcome;
use gcir::verify::Verdict;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gcir",
    version,
    about = "Numerical laboratory for the generalized Cox-Ingersoll-Ross diffusion",
    long_about = "Simulates the diffusion dX = (alpha - delta X) dt + X^h dB (1/2 < h < 1),\n\
                  couples it by change of measure, and verifies its Harnack-type and\n\
                  super Poincare inequalities against closed-form constants.\n\n\
                  The worker count can be capped with the GCIR_THREADS environment\n\
                  variable without changing any numeric output."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured experiment(s) and write artifacts.
    Run(RunArgs),
    /// Parse and validate a config, echoing the resolved document.
    Validate {
        /// Path to the JSON config (or a previous run's manifest).
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a results directory.
    Report {
        /// Run directory containing manifest.json and report CSVs.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON config (or a previous run's manifest).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured experiment (simulate, coupling, harnack,
    /// log-harnack, gradient, measure, isoperimetric, super-poincare,
    /// optimality, all).
    #[arg(long)]
    experiment: Option<String>,
    /// Override the ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Debug: multiply every proven constant (0.5 must trip the harness).
    #[arg(long = "scale-constant")]
    scale_constant: Option<f64>,
    /// Override the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the number of time steps.
    #[arg(long)]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("GCIR_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("GCIR_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Validate { config } => validate(&config),
        Command::Report { dir } => report(&dir),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

fn validate(path: &Path) -> ExitCode {
    match load_config(path).and_then(|cfg| cfg.validate().map(|_| cfg)) {
        Ok(cfg) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("config serializes")
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> ExitCode {
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    if let Some(name) = &args.experiment {
        cfg.experiment = match name.parse::<Experiment>() {
            Ok(e) => e,
            Err(msg) => {
                eprintln!("config validation error: experiment: {msg}");
                return ExitCode::from(2);
            }
        };
    }
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Some(paths) = args.paths {
        cfg.sim.n_paths = paths;
    }
    if let Some(steps) = args.steps {
        cfg.sim.n_steps = steps;
    }
    if let Some(scale) = args.scale_constant {
        cfg.scale_constant = scale;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.display().to_string();
    }
    let params = match cfg.validate() {
        Ok(p) => p,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };

    let dir = match prepare_run_dir(&cfg) {
        Ok(dir) => dir,
        Err(err) => {
            eprintln!("cannot prepare run directory: {err:#}");
            return ExitCode::from(2);
        }
    };
    println!("writing artifacts to {}", dir.display());

    let mut outcome = RunOutcome { reports: Vec::new() };
    let run_result =
        experiments::run_experiment(cfg.experiment, &cfg, &params, &dir, &mut outcome);

    // always flush what we have, plus the manifest
    if let Err(err) = write_outputs(&cfg, &dir, &outcome, run_result.as_ref().err()) {
        eprintln!("cannot write artifacts: {err:#}");
        return ExitCode::from(2);
    }
    if let Err(err) = run_result {
        eprintln!("experiment failed: {err:#}");
        return ExitCode::from(2);
    }

    let violated = outcome.n_violated();
    for r in &outcome.reports {
        if r.verdict == Verdict::Violated {
            eprintln!("VIOLATED: {} (lhs {}, rhs {})", r.check_id, r.lhs, r.rhs);
        }
    }
    println!("{} checks, {} violated", outcome.reports.len(), violated);
    if violated > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn prepare_run_dir(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&base).with_context(|| format!("create {}", base.display()))?;
    let mut candidate = base.join(format!("run-{stamp}-seed{}", cfg.sim.seed));
    let mut attempt = 1;
    while candidate.exists() {
        attempt += 1;
        candidate = base.join(format!("run-{stamp}-seed{}-{attempt}", cfg.sim.seed));
    }
    fs::create_dir(&candidate).with_context(|| format!("create {}", candidate.display()))?;
    Ok(candidate)
}

fn write_outputs(
    cfg: &ExperimentConfig,
    dir: &Path,
    outcome: &RunOutcome,
    failure: Option<&anyhow::Error>,
) -> anyhow::Result<()> {
    let reports_path = dir.join("reports.csv");
    let w = std::io::BufWriter::new(fs::File::create(&reports_path)?);
    gcir::verify::write_reports_csv(&outcome.reports, w)?;

    let manifest = Manifest {
        config: cfg.clone(),
        meta: ManifestMeta {
            lib_version: gcir::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
            seed: cfg.sim.seed,
            n_reports: outcome.reports.len(),
            n_violated: outcome.n_violated(),
        },
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    if let Some(err) = failure {
        fs::write(dir.join("FAILED"), format!("{err:#}\n"))?;
    }
    Ok(())
}

fn report(dir: &Path) -> ExitCode {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = match fs::read_to_string(&manifest_path)
        .map_err(|e| e.to_string())
        .and_then(|text| serde_json::from_str(&text).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(err) => {
            eprintln!("cannot read {}: {err}", manifest_path.display());
            return ExitCode::from(2);
        }
    };
    println!("run of experiment '{}'", manifest.config.experiment.name());
    println!(
        "  model: alpha = {}, delta = {}, h = {}",
        manifest.config.model.alpha, manifest.config.model.delta, manifest.config.model.h
    );
    println!(
        "  sim: T = {}, n_steps = {}, n_paths = {}, seed = {}",
        manifest.config.sim.horizon,
        manifest.config.sim.n_steps,
        manifest.config.sim.n_paths,
        manifest.meta.seed
    );
    println!("  created: {}", manifest.meta.created_utc);
    println!(
        "  checks: {} total, {} violated",
        manifest.meta.n_reports, manifest.meta.n_violated
    );
    if dir.join("FAILED").exists() {
        println!("  status: FAILED marker present");
    }

    // verdict histogram straight from the CSV
    if let Ok(text) = fs::read_to_string(dir.join("reports.csv")) {
        let (mut holds, mut within, mut violated) = (0u32, 0u32, 0u32);
        for line in text.lines().skip(1) {
            match line.rsplit(',').next() {
                Some("holds") => holds += 1,
                Some("holds-within-error") => within += 1,
                Some("violated") => violated += 1,
                _ => {}
            }
        }
        println!("  verdicts: {holds} holds, {within} within-error, {violated} violated");
        if violated > 0 {
            for line in text.lines().skip(1).filter(|l| l.ends_with(",violated")) {
                println!("    {line}");
            }
        }
    }
    let mut artifacts: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    artifacts.sort();
    println!("  artifacts: {}", artifacts.join(", "));
    ExitCode::SUCCESS
}
