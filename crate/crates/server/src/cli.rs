use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hopes_core::session::{BackendKind, SessionConfig};

#[derive(Debug, Parser)]
#[command(
    name = "hopes",
    version,
    about = "Perspective-shifting land-use policy simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation in the terminal; the human's turns are read from stdin.
    Run(RunArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Re-execute a recorded run directory and compare its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Stub,
    Remote,
}

/// Flags shared by `run` and `serve`; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Session config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario file (TOML): world parameters and institutional network.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// `observer` or the id of the agent the human plays.
    #[arg(long)]
    pub role: Option<String>,
    #[arg(long)]
    pub phases: Option<u32>,
    /// Ticks per phase.
    #[arg(long)]
    pub lag: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Script book for the stub backend (TOML).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Output directory for run records.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn session_config(&self) -> anyhow::Result<SessionConfig> {
        let mut config = match &self.config {
            Some(path) => {
                SessionConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => SessionConfig::default(),
        };
        if let Some(scenario) = &self.scenario {
            config.scenario = Some(scenario.clone());
        }
        if let Some(role) = &self.role {
            config.human_role = Some(role.clone());
        }
        if let Some(phases) = self.phases {
            config.phases = phases;
        }
        if let Some(lag) = self.lag {
            config.lag = lag;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(backend) = self.backend {
            config.backend = match backend {
                Backend::Stub => BackendKind::Stub,
                Backend::Remote => BackendKind::Remote,
            };
        }
        if let Some(script) = &self.script {
            config.script = Some(script.clone());
        }
        if let Some(out) = &self.out {
            config.out_dir = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Seconds to wait for each human turn before submitting an empty message.
    #[arg(long)]
    pub human_timeout: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A `run-N` directory written by an earlier run.
    pub run_dir: PathBuf,
    /// Where to write the replayed run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
