//! Command-line front end. Each subcommand reads one run configuration and
//! writes its outputs under the configured directory.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_bounds, cmd_compare, cmd_englobe, cmd_predict, cmd_simulate, cmd_validate, load_data, Data,
};
pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mview", version, about = "Multiview embedding forecasts and their inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Integrate a surrogate model family and a "real" panel.
    Simulate,
    /// Multiview forecasts of the real panel's test span.
    Predict,
    /// Compare model-model and model-real predictive correlations.
    Englobe,
    /// Prediction bounds, densities and ensemble diagnostics.
    Bounds,
    /// Test whether model projections improve the real forecasts.
    Compare,
    /// Check the configuration and the variables it references.
    Validate,
}

/// Loads the configuration named by `args` and applies flag overrides.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "a configuration file is required"))?;
    let mut cfg = RunConfig::load(path)?;
    // Relative paths inside the file resolve against its directory.
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    cfg.resolve_paths(&base);
    if cfg.output.is_relative() {
        cfg.output = base.join(&cfg.output);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

/// Runs one command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be >= 1"));
        }
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Predict => cmd_predict(&cfg),
        Command::Englobe => cmd_englobe(&cfg),
        Command::Bounds => cmd_bounds(&cfg),
        Command::Compare => cmd_compare(&cfg),
        Command::Validate => cmd_validate(&cfg),
    }
}
