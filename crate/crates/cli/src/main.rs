//! `regsel`: model decompositions, identifiability certificates, solvers,
//! polar-calculus checks and Monte-Carlo sweeps from the command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 not identifiable, 4 inconclusive
//! or restricted injectivity violated, 5 solver did not converge, 6 a polar
//! identity failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use commands::{CliError, EXIT_VALIDATION};
use config::*;

#[derive(Debug, Parser)]
#[command(name = "regsel", version, about = "Model selection with decomposable gauge regularizers")]
struct Cli {
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Model subspace, model vectors and stability parameters at x.
    Decompose(DecomposeArgs),
    /// Irrepresentability certificate for recovering x from Φx.
    Certify(CertifyArgs),
    /// Penalized or noiseless recovery from measurements y.
    Solve(SolveArgs),
    /// Monte-Carlo sweeps; writes a CSV table and a JSON sidecar.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Verify polar-calculus identities on supplied or random polytopes.
    Polar(PolarArgs),
    /// Run a command described by a JSON document.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// IC < 1 frequency at the sampling bound for ℓ∞ recovery.
    CsLinf(CsLinfArgs),
    /// Success frequency along a grid of measurement counts.
    PhaseTransition(PhaseTransitionArgs),
}

/// Pretty JSON with object keys in sorted order.
pub(crate) fn to_sorted_json(v: &Value) -> String {
    // serde_json's default map is ordered by key.
    serde_json::to_string_pretty(v).expect("serializable")
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError(format!("invalid config: {e}")))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(|e| CliError(e.to_string()))?;
    }
    let cfg = match cli.command {
        Command::Decompose(a) => RunConfig::Decompose(a),
        Command::Certify(a) => RunConfig::Certify(a),
        Command::Solve(a) => RunConfig::Solve(a),
        Command::Experiment(Experiment::CsLinf(a)) => RunConfig::CsLinf(a),
        Command::Experiment(Experiment::PhaseTransition(a)) => RunConfig::PhaseTransition(a),
        Command::Polar(a) => RunConfig::Polar(a),
        Command::Run { config } => load_config(&config)?,
    };
    let (result, out) = commands::run_config(&cfg);
    let (value, code) = result?;
    let text = to_sorted_json(&value);
    if let Some(path) = out {
        commands::write_output(path, &text)?;
    }
    println!("{text}");
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
