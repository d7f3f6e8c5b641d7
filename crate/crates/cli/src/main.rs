#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Reversed travelling waves of a harvested bistable equation.
#[derive(Debug, Parser)]
#[command(name = "wavegame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Manifolds of the wave ODE, the invariant region and the rest points.
    PhasePortrait(CommonArgs),
    /// Wave profile, harvesting density and validity checks.
    BuildWave(CommonArgs),
    /// Extinction speeds over a grid of discounts.
    SpeedMaps(CommonArgs),
    /// Equilibrium certificate of one wave.
    Verify(CommonArgs),
    /// Front dynamics of the harvested or free equation.
    Simulate(CommonArgs),
    /// Coordinated harvest against the equilibrium.
    Cooperate(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, action): (&CommonArgs, commands::Action) = match &cli.command {
        Command::PhasePortrait(a) => (a, commands::phase_portrait),
        Command::BuildWave(a) => (a, commands::build_wave),
        Command::SpeedMaps(a) => (a, commands::speed_maps),
        Command::Verify(a) => (a, commands::verify),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Cooperate(a) => (a, commands::cooperate),
    };
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    let out = commands::Output::create(&config.output, args.quiet)?;
    out.json("resolved_config.json", &config)?;
    action(&config, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavegame: {e}");
            e.exit_code()
        }
    }
}
