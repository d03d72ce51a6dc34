//! Command line front end for the curvature and deviation bound library.
//!
//! Four subcommands share one config format and one output layout: every
//! run lands in a directory named by a hash of the merged config, holding
//! the data files plus a manifest that records exactly what ran.
//!
//! Exit codes: 0 clean, 1 a checked inequality was violated, 2 the run
//! could not be set up (bad config, unusable chain, missing parameter).

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use curvctmc_core::Result;

use commands::{CommandCtx, Outcome};
use config::ExperimentConfig;
use output::RunDir;

/// Curvature certificates and deviation bounds for birth-death chains.
#[derive(Parser)]
#[command(name = "curvctmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify curvature lower bounds and check them against exact contraction rates
    Curvature(RunArgs),
    /// Evaluate closed-form deviation bounds over the level grid
    Bound(RunArgs),
    /// Estimate tail probabilities by seeded simulation and compare against one bound
    Tail(RunArgs),
    /// Run the full verification suite
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment description
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Master seed; overrides the config file
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Monte Carlo path budget; overrides the config file
    #[arg(long, value_name = "N")]
    paths: Option<u64>,
    /// Output directory; overrides the config file
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (label, args) = match &cli.command {
        Command::Curvature(args) => ("curvature", args),
        Command::Bound(args) => ("bound", args),
        Command::Tail(args) => ("tail", args),
        Command::Verify(args) => ("verify", args),
    };
    match run(label, args) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(label: &'static str, args: &RunArgs) -> Result<Outcome> {
    let started = Instant::now();
    let mut config = ExperimentConfig::from_path(&args.config)?;
    config.apply_overrides(args.seed, args.paths, args.out.as_deref());
    let seed = config.require_seed()?;
    let run_id = output::run_id(&config)?;
    let run = RunDir::create(&config.out_dir(), &run_id)?;
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let ctx = CommandCtx {
        config,
        base_dir,
        run,
        run_id,
        seed,
        started,
    };
    log::info!("run {} -> {}", ctx.run_id, ctx.run.path().display());
    match label {
        "curvature" => commands::cmd_curvature(&ctx),
        "bound" => commands::cmd_bound(&ctx),
        "tail" => commands::cmd_tail(&ctx),
        _ => commands::cmd_verify(&ctx),
    }
}
