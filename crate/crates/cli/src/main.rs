use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use tradecast_cli::commands;
use tradecast_cli::config::ExperimentConfig;

/// Forecasting benchmark for country export baskets: train per-product
/// classifiers on comparative-advantage matrices and evaluate them with
/// imbalance-aware indicators.
#[derive(Parser)]
#[command(name = "tradecast", version, about)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "tradecast.toml")]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the worker count (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Density per year and the binary transition matrices.
    Describe,
    /// Train, score and evaluate both prediction tasks.
    Run,
    /// Evaluate one trained model across a range of horizons.
    DeltaSweep,
    /// Feature importance for one product, optionally with a tree DOT.
    Importance {
        /// Target product code.
        #[arg(long)]
        product: String,
        /// Also export this tree (index within the ensemble) as DOT.
        #[arg(long)]
        dot_tree: Option<usize>,
    },
    /// Calibration curves for both tasks.
    Calibrate,
    /// Generate a synthetic panel and its ground-truth sidecar.
    Synth,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    match &cli.command {
        Command::Describe => commands::cmd_describe(&cfg),
        Command::Run => commands::cmd_run(&cfg),
        Command::DeltaSweep => commands::cmd_delta_sweep(&cfg),
        Command::Importance { product, dot_tree } => {
            commands::cmd_importance(&cfg, product, *dot_tree)
        }
        Command::Calibrate => commands::cmd_calibrate(&cfg),
        Command::Synth => commands::cmd_synth(&cfg),
    }
}
