//! Command-line front end: run experiments, diagnostics and oracle audits.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bregfw::diagnostics::lmo_audit;
use bregfw::experiment::{
    check_problem, load_config, parse_kernel_spec, parse_region_spec, run_experiment, summary_csv,
    write_outputs, ExperimentConfig,
};
use bregfw::kernels::estimate_nu;
use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "bregfw",
    version,
    about = "Bregman Frank-Wolfe experiments and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver of a TOML experiment and write traces and summaries.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run repetitions and solvers one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Diagnostics suite for the first repetition of an experiment (JSON).
    Check { config: PathBuf },
    /// Compare the linear minimization oracle against an exact reference.
    LmoTest {
        /// e.g. `simplex:n=6`, `box:n=4,lo=-1,hi=2`, `k_sparse:n=6,k=2`.
        region: String,
        #[arg(long, default_value_t = 500)]
        directions: usize,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the scaling exponent of a kernel over a region.
    NuEst {
        /// `euclidean`, `entropy`, `burg`, `quartic` or `quartic_scaled:c=2`.
        kernel: String,
        region: String,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Input problems exit with 1, everything else with 2.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<bregfw::Error> for Failure {
    fn from(e: bregfw::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

type Outcome = Result<(), Failure>;

fn validation(e: bregfw::Error) -> Failure {
    Failure::Validation(e.into())
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let s = serde_json::to_string_pretty(value)
        .context("serializing output")
        .map_err(Failure::Runtime)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Runtime(e.into())),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    load_config(path).map_err(|e| {
        Failure::Validation(anyhow::Error::new(e).context(format!("loading {}", path.display())))
    })
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, sequential: bool) -> Outcome {
    let mut cfg = load(&config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if sequential {
        cfg.parallel = false;
    }
    info!(
        "{}: {} solver(s) x {} repetition(s)",
        cfg.name,
        cfg.solvers.len(),
        cfg.repetitions
    );
    let out = run_experiment(&cfg);
    write_outputs(&cfg, &out)?;
    let _ = write!(std::io::stdout().lock(), "{}", summary_csv(&out.summary));
    info!("wrote results to {}", cfg.output_dir.display());

    let failed = out.runs.iter().filter(|r| r.result.is_err()).count()
        + out
            .summary
            .repetitions
            .iter()
            .filter(|r| r.error.is_some())
            .count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{failed} run(s) failed; see summary.json"
        )));
    }
    Ok(())
}

fn check(config: PathBuf) -> Outcome {
    let cfg = load(&config)?;
    let report = check_problem(&cfg)?;
    print_json(&report)?;
    if !report.all_passed() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "one or more checks failed"
        )));
    }
    Ok(())
}

fn lmo_test(region: &str, directions: usize, tol: Option<f64>, seed: u64) -> Outcome {
    let region = parse_region_spec(region).map_err(validation)?;
    let tol = tol.unwrap_or(if region.is_polytope() { 1e-12 } else { 1e-8 });
    let audit = lmo_audit(&region, directions, tol, seed)?;
    print_json(&audit)?;
    if !audit.passed() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{} of {} directions disagree with the reference",
            audit.mismatches + audit.infeasible,
            audit.directions
        )));
    }
    Ok(())
}

fn nu_est(kernel: &str, region: &str, pairs: usize, seed: u64) -> Outcome {
    let kernel = parse_kernel_spec(kernel).map_err(validation)?;
    let region = parse_region_spec(region).map_err(validation)?;
    let gammas: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let est = estimate_nu(&kernel, &region, pairs, &gammas, seed)?;
    print_json(&serde_json::json!({
        "kernel": kernel.id().to_string(),
        "region": region.kind_name(),
        "nu_hat": est.nu_hat,
        "pairs_checked": est.pairs_checked,
        "worst": est.worst,
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            sequential,
        } => run(config, output_dir, sequential),
        Command::Check { config } => check(config),
        Command::LmoTest {
            region,
            directions,
            tol,
            seed,
        } => lmo_test(&region, directions, tol, seed),
        Command::NuEst {
            kernel,
            region,
            pairs,
            seed,
        } => nu_est(&kernel, &region, pairs, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
