//! Command-line harness: configuration, experiment commands and CSV output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_embedding_sweep, cmd_evaluate, cmd_forecast, cmd_interval, cmd_simulate, cmd_stability,
};
pub use config::{parse_config, preset, Dataset, ExperimentConfig, Method};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "spade4", version, about = "Epidemic forecasting experiments")]
pub struct Cli {
    /// Experiment config (`key = value` lines); defaults to the synthetic setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic series (optionally noised).
    Simulate,
    /// Forecast the horizon after each training size, per method.
    Forecast,
    /// Relative error over the holdout for each method and training size.
    Evaluate,
    /// Point forecast with 95% bands from backtest errors.
    Interval,
    /// Per-day spread of forecasts over many random bases.
    Stability {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Forecast error for a range of embedding dimensions.
    EmbedSweep {
        #[arg(long, value_delimiter = ',')]
        p_values: Option<Vec<usize>>,
    },
}

/// Resolves the configuration and runs the command; returns written files.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Forecast => cmd_forecast(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Interval => cmd_interval(&cfg),
        Command::Stability { runs } => {
            if let Some(r) = runs {
                cfg.runs = *r;
            }
            cmd_stability(&cfg, cfg.runs)
        }
        Command::EmbedSweep { p_values } => {
            if let Some(p) = p_values {
                cfg.p_values = p.clone();
            }
            cmd_embedding_sweep(&cfg, &cfg.p_values)
        }
    }
}
