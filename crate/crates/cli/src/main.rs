//! Command-line entry point: dataset generation, training, inference,
//! evaluation, sweeps and report emission.
//!
//! Exit codes: 0 success, 1 runtime/numeric failure, 2 configuration or
//! validation error.

mod commands;
mod runconfig;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ppr", version, about = "Position-regression anomaly detection for 3D volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset with ground-truth masks.
    GenData(commands::gen_data::GenDataArgs),
    /// Train the position regressor or the autoencoder baseline.
    Train(commands::train::TrainArgs),
    /// Compute an error map for one volume from a checkpoint.
    Infer(commands::infer::InferArgs),
    /// Evaluate a checkpoint on a test manifest: ROC curves and AUROC.
    Eval(commands::eval::EvalArgs),
    /// Patch-size or model-size sweep driven by a JSON config.
    Sweep(commands::sweep::SweepArgs),
    /// Join metrics, parameter counts and memory estimates across runs.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Creates the output directory, refusing to overwrite non-empty ones
/// unless forced.
pub(crate) fn prepare_out_dir(dir: &PathBuf, force: bool) -> ppr_core::Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(ppr_core::error::Error::io(dir.clone()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(ppr_core::Error::Config(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir).map_err(ppr_core::error::Error::io(dir.clone()))?;
    }
    Ok(())
}
