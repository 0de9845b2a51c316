//! Orchestration for the unlearning lab: configuration, the staged pipeline
//! and its run manifests.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod workspace;

use std::path::PathBuf;

use clap::Parser;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{run_all, run_stage, Ctx, Outcome, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "unlearn-lab",
    version,
    about = "Cross-lingual machine unlearning experiments"
)]
pub struct Cli {
    /// gen-data, finetune, unlearn, eval, analyze, report, or all
    #[arg(required_unless_present = "print_schema")]
    pub command: Option<String>,
    /// Experiment config (JSON)
    #[arg(long, required_unless_present = "print_schema")]
    pub config: Option<PathBuf>,
    /// Re-run even when the stage's manifest is current
    #[arg(long)]
    pub force: bool,
    /// Maximum concurrent jobs
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Global seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Workspace directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the config JSON schema and exit
    #[arg(long)]
    pub print_schema: bool,
}

/// Loads the config and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.workspace = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes a parsed command line; returns one status line per stage.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    if cli.print_schema {
        let text = serde_json::to_string_pretty(&config::schema()).expect("schema serializes");
        return Ok(vec![text]);
    }
    let command = cli.command.as_deref().unwrap_or_default();
    let stages = if command == "all" {
        None
    } else {
        Some(Stage::parse(command).ok_or_else(|| CliError::Config(format!("unknown command {command:?}")))?)
    };
    let ctx = Ctx::new(load_config(cli)?);
    let results = match stages {
        Some(s) => vec![(s, run_stage(&ctx, s, cli.force)?)],
        None => run_all(&ctx, cli.force)?,
    };
    Ok(results
        .into_iter()
        .map(|(s, o)| match o {
            Outcome::Ran => format!("{}: done", s.name()),
            Outcome::UpToDate => format!("{}: up to date", s.name()),
        })
        .collect())
}
