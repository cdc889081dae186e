//! `pairmine`: pretrain, evaluate, and compare BYOL runs with influence-
//! guided positive mining. Exit code 2 flags invalid configuration, 1 a
//! runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pairmine_core::config::RunConfig;
use pairmine_core::error::Result;

#[derive(Debug, Parser)]
#[command(name = "pairmine", version, about = "BYOL pretraining with influence-guided positive mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain a model and write metrics plus a final checkpoint.
    Pretrain(CommonArgs),
    /// Linear-probe and kNN accuracy of a trained checkpoint.
    Eval(CheckpointArgs),
    /// Multi-seed comparison grid over selection policies.
    Compare(CommonArgs),
    /// Influence scores of one deterministic batch under a checkpoint.
    TracinDump(CheckpointArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration in TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `io.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overriding the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model to load.
    #[arg(long)]
    checkpoint: PathBuf,
}

impl CommonArgs {
    /// Loads the config, applies the command-line overrides, and resolves
    /// the seed tree, so every later stage sees a fully explicit config.
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::parse("")?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.io.out_dir = out.clone();
        }
        config.resolve();
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(args) => commands::pretrain(&args.load()?),
        Command::Eval(args) => commands::eval(&args.common.load()?, &args.checkpoint),
        Command::Compare(args) => commands::compare(&args.load()?),
        Command::TracinDump(args) => commands::tracin_dump(&args.common.load()?, &args.checkpoint),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
