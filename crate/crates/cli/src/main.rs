use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod failure;
mod labels;

/// Tomographic reconstruction of 3D heatmaps from 2D slice evaluators.
#[derive(Debug, Parser)]
#[command(name = "tomorecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a heatmap from a volume and a slice evaluator.
    Reconstruct(commands::reconstruct::Args),
    /// Reconstruct with the sum evaluator and compare against the input.
    Selftest(commands::selftest::Args),
    /// Apply two-threshold binarization to a heatmap.
    Binarize(commands::binarize::Args),
    /// Cross-validated threshold selection and segmentation scores.
    Evaluate(commands::evaluate::Args),
    /// Export randomly oriented, augmented training slices.
    SampleSlices(commands::sample::Args),
    /// Write a synthetic test volume.
    Phantom(commands::phantom::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reconstruct(a) => commands::reconstruct::run(a),
        Command::Selftest(a) => commands::selftest::run(a),
        Command::Binarize(a) => commands::binarize::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::SampleSlices(a) => commands::sample::run(a),
        Command::Phantom(a) => commands::phantom::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
