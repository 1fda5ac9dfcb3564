//! `intermap`: thresholds, stationary densities and experiments for random
//! compositions of LSV and attracting interval maps.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::LoadedConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "intermap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the `seed` of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for CSV and JSON files. Without it only the summary is
    /// printed.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Phase classification: eta, gamma and the admissible beta range.
    Classify,
    /// `P^n 1` on the grid, with residuals and envelope fits.
    Density,
    /// One random orbit.
    Orbit,
    /// Orbit histogram of the stationary measure.
    Histogram,
    /// Ulam estimate of the stationary density.
    Ulam,
    /// First-return times to the Kac set.
    Kac,
    /// Cone checks on the converged density and cone preservation trials.
    Cones,
    /// Preimage sequences of 1/2 and their bounds.
    Preimages,
    /// Distance between stationary densities under probability perturbations.
    Continuity,
    /// Phase classification across a parameter grid.
    Sweep,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::Config {
            location: "--config".into(),
            message: "a configuration file is required".into(),
        });
    };
    let mut loaded = LoadedConfig::load(path)?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config { location: "--threads".into(), message: "must be positive".into() });
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.to_string()))?;
    let system = loaded.system()?;
    let seed = loaded.config.seed;
    let ctx = Context { loaded: &loaded, system, out: cli.out.as_deref() };
    pool.install(|| match cli.command {
        Command::Classify => commands::classify(&ctx),
        Command::Density => commands::density(&ctx),
        Command::Orbit => commands::orbit(&ctx, seed),
        Command::Histogram => commands::histogram(&ctx, seed),
        Command::Ulam => commands::ulam(&ctx),
        Command::Kac => commands::kac(&ctx, seed),
        Command::Cones => commands::cones(&ctx, seed),
        Command::Preimages => commands::preimages(&ctx, seed),
        Command::Continuity => commands::continuity(&ctx),
        Command::Sweep => commands::sweep_cmd(&ctx),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("intermap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
