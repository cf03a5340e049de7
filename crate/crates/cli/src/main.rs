mod calibrate;
mod clean;
mod config;
mod manifest;
mod propagate;
mod report;
mod simulate;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::manifest::Run;

/// Car-following model simulation, calibration and error analysis.
#[derive(Debug, Parser)]
#[command(name = "cfcal", version)]
struct Cli {
    /// Seed for stochastic steps; overrides any seed in the command's file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Data configuration (CSV schema, corridor, cleaning) as TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove drift points, smooth, and differentiate trajectories.
    Clean(clean::Args),
    /// Simulate a platoon scenario.
    Simulate(simulate::Args),
    /// Calibrate model parameters against observed trajectories.
    Calibrate(calibrate::Args),
    /// Propagate acceleration errors through a linear-law platoon.
    Propagate(propagate::Args),
    /// Compare observed and simulated trajectories.
    Report(report::Args),
}

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<cfcal::Error>())
        .any(cfcal::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let data = config::DataConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out_dir)?;
    let mut run = Run::start(cli.command_name(), &cli.out_dir, cli.seed);
    if let Some(c) = &cli.config {
        run.input(c)?;
    }
    match &cli.command {
        Command::Clean(a) => clean::run(a, &data, &mut run)?,
        Command::Simulate(a) => simulate::run(a, &data, &mut run)?,
        Command::Calibrate(a) => calibrate::run(a, &data, &mut run)?,
        Command::Propagate(a) => propagate::run(a, &mut run)?,
        Command::Report(a) => report::run(a, &data, &mut run)?,
    }
    run.finish()
}

impl Cli {
    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Clean(_) => "clean",
            Command::Simulate(_) => "simulate",
            Command::Calibrate(_) => "calibrate",
            Command::Propagate(_) => "propagate",
            Command::Report(_) => "report",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
