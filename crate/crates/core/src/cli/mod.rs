//! The `selbayes` command line: `select`, `infer`, `simulate`, `features`.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_features, cmd_infer, cmd_select, cmd_simulate, FeaturesReport, RunReport, SelectionArtifact,
    SelectionStatus, SimulationSummary,
};
pub use config::{parse_levels, Overrides, RunConfig};
pub use io::Provenance;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "selbayes", version, about = "Selection-aware Bayesian inference after randomized LASSO")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated credible levels, e.g. `0.5,0.8,0.95`.
    #[arg(long, global = true)]
    pub levels: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// First-stage screen and randomized second-stage selection.
    Select,
    /// Selection-aware and naive credible intervals for a saved selection.
    Infer,
    /// Coverage, length and screening sweep on synthetic data.
    Simulate,
    /// GSVA scores and density principal component scores.
    Features,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let levels = self.levels.as_deref().map(parse_levels).transpose()?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            levels,
            threads: self.threads,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Select => cmd_select(cfg).map(|_| ()),
        Command::Infer => cmd_infer(cfg).map(|_| ()),
        Command::Simulate => cmd_simulate(cfg).map(|_| ()),
        Command::Features => cmd_features(cfg).map(|_| ()),
    }
}

/// Resolves the configuration and runs the command on a dedicated pool.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}
