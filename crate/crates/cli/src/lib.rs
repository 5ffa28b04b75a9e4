//! `rpnet` experiment driver: every command reads a [`RunConfig`], writes the
//! resolved config next to its CSV outputs and prints a human-readable table.

pub mod commands;
pub mod config;
pub mod error;
pub mod setup;

use std::path::PathBuf;

use clap::Parser;

pub use config::{Command, RunConfig, RUN_CONFIG_FILE};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rpnet", version, about = "Train, evaluate, check and benchmark RPNet point-cloud models")]
pub struct Cli {
    pub command: Command,
    /// JSON run config; built-in defaults for the command when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// `key=value`; `run.<path>` edits the run config, other keys edit the
    /// model spec. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Cli {
    /// File values, then flags. The command on the line wins over the file.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default_for(self.command),
        };
        cfg.command = self.command;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
        }
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        Ok(cfg)
    }
}

pub fn execute(cfg: &RunConfig) -> CliResult<()> {
    match cfg.command {
        Command::Train => commands::cmd_train(cfg).map(drop),
        Command::Eval => commands::cmd_eval(cfg).map(drop),
        Command::Gradcheck => commands::cmd_gradcheck(cfg).map(drop),
        Command::Bench => commands::cmd_bench(cfg).map(drop),
        Command::Ablate => commands::cmd_ablate(cfg).map(drop),
        Command::Robustness => commands::cmd_robustness(cfg).map(drop),
    }
}

/// Parse, run and map the outcome to a process exit code.
pub fn run(cli: &Cli) -> i32 {
    match cli.resolve().and_then(|cfg| execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rpnet {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
