mod commands;
mod manifest;
mod opts;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sess_core::{ErrorCategory, SessError};

use crate::commands::{eval, inspect, saliency, sweep};

/// Multi-scale saliency enhancement for black-box image classifiers.
#[derive(Debug, Parser)]
#[command(name = "sess", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an enhanced saliency map for one image.
    Saliency(saliency::SaliencyArgs),
    /// Repeat a saliency run from its manifest.json.
    Rerun(saliency::RerunArgs),
    /// Insertion/deletion evaluation over a dataset manifest.
    EvalInsdel(eval::InsdelArgs),
    /// Pointing Game evaluation over an annotated dataset manifest.
    EvalPointing(eval::PointingArgs),
    /// Evaluate a grid of scale counts or pre-filter ratios.
    Sweep(sweep::SweepArgs),
    /// Render every kept patch map as a montage, with per-patch scores.
    InspectPatches(inspect::InspectArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err
        .chain()
        .find_map(|e| e.downcast_ref::<SessError>())
        .map(SessError::category);
    match category {
        Some(ErrorCategory::Input) => 2,
        Some(ErrorCategory::Model) => 3,
        Some(ErrorCategory::Internal) | None => 4,
    }
}

fn configure_workers() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("SESS_NUM_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| SessError::invalid(format!("SESS_NUM_WORKERS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SessError::Internal(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_workers()?;
    match cli.command {
        Command::Saliency(a) => saliency::run(a),
        Command::Rerun(a) => saliency::rerun(a),
        Command::EvalInsdel(a) => eval::run_insdel(a),
        Command::EvalPointing(a) => eval::run_pointing(a),
        Command::Sweep(a) => sweep::run(a),
        Command::InspectPatches(a) => inspect::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
