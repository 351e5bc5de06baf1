//! `tacforce`: command-line pipeline from material characterization data to
//! trained force-distribution models.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 numerical failure,
//! 4 I/O error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tacforce_core::Error;

#[derive(Parser)]
#[command(
    name = "tacforce",
    version,
    about = "Contact force distribution pipeline: material fitting, labeling, flow features, training"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages; overrides the config file.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object deep-merged over the config file (repeatable),
    /// e.g. --set '{"train":{"epochs":10}}'.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit Ogden parameters to stress-stretch curve CSVs.
    Fit(commands::fit::FitArgs),
    /// Convert raw measurement CSVs into stress-stretch curves.
    Characterize(commands::characterize::CharacterizeArgs),
    /// Bin nodal force exports into distribution labels.
    Label(commands::label::LabelArgs),
    /// Extract pooled optical-flow features from an image pair.
    Features(commands::features::FeaturesArgs),
    /// Generate a deterministic synthetic dataset.
    Synth(commands::synth::SynthArgs),
    /// Train the regression network on a dataset directory.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(commands::eval::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = match config::Context::load(
        cli.config.as_deref(),
        &cli.overrides,
        cli.seed,
        cli.threads,
    ) {
        Ok(ctx) => ctx,
        Err(e) => return fail(&e),
    };

    let result = match cli.command {
        Command::Fit(args) => commands::fit::run(&ctx, args),
        Command::Characterize(args) => commands::characterize::run(&ctx, args),
        Command::Label(args) => commands::label::run(&ctx, args),
        Command::Features(args) => commands::features::run(&ctx, args),
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::Train(args) => commands::train::run(&ctx, args),
        Command::Eval(args) => commands::eval::run(&ctx, args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        Error::Domain(_)
        | Error::Geometry(_)
        | Error::Schema(_)
        | Error::Config(_)
        | Error::Pairing(_) => 2,
        Error::Optimization(_) => 3,
        Error::Io(_) => 4,
    };
    ExitCode::from(code)
}
