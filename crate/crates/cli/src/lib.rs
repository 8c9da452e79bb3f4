//! Command-line driver for the space-time assimilation solver.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Target;
use crate::config::{RunConfig, OUTPUT_DIR_ENV};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "assim", version, about = "Space-time data assimilation experiments")]
pub struct Cli {
    /// Config file with `key=value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.N=80`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub problem: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one assimilation problem and dump the fields.
    Assimilate,
    /// Run the adaptive time-grid loop.
    Adapt,
    /// Recompute a reference data set: table1, example2 or example3.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Compare against the dense reduced-space oracle on nested grids.
    OracleCheck,
}

impl Cli {
    /// Defaults, then the config file, then the environment, then flags.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                cfg.output_dir = PathBuf::from(dir);
            }
        }
        for kv in &self.set {
            cfg.apply_assignment(kv)?;
        }
        if let Some(p) = &self.problem {
            cfg.apply("problem.name", p)?;
        }
        if let Some(a) = &self.alpha {
            cfg.apply("problem.alpha", a)?;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Assimilate => commands::assimilate(&cfg),
        Command::Adapt => commands::adapt(&cfg),
        Command::Reproduce { target } => commands::reproduce(&cfg, *target),
        Command::OracleCheck => commands::oracle_check(&cfg),
    }
}
