//! `vaxstance` command-line entry point.
//!
//! Every subcommand runs one pipeline stage from a TOML config; `run-all`
//! runs the whole DAG. Exit status is 0 on success, 1 for invalid
//! configuration, 2 for runtime failures and 3 when an upstream stage has
//! not been run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use vaxstance::pipeline::{Pipeline, PipelineConfig, PipelineError, Stage, StageOutcome};

#[derive(Debug, Parser)]
#[command(name = "vaxstance", version, about = "Vaccine-stance analysis pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, short, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Stage to run. With `run-all`, stop after this stage.
    #[arg(long, global = true)]
    stage: Option<String>,

    /// Overrides `master_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read tweets, filter by keyword and split into periods.
    Ingest,
    /// Train the stance model (or load external scores) and label every tweet.
    Classify,
    /// Stratified cross-validation of the stance model.
    Eval,
    /// Single-word bias audit and sampling audits.
    AuditBias,
    /// Per-user, per-period stances.
    Users,
    /// Seeded topic models for Anti- and Pro-Vaxxer tweets.
    Topics,
    /// Stance transitions, bot filtering and user groups.
    Changes,
    /// Stance composition of followings for each group.
    Neighbors,
    /// Summary tables for the whole run.
    Report,
    /// Every stage in dependency order.
    RunAll,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Classify => Stage::Classify,
            Command::Eval => Stage::Eval,
            Command::AuditBias => Stage::AuditBias,
            Command::Users => Stage::Users,
            Command::Topics => Stage::Topics,
            Command::Changes => Stage::Changes,
            Command::Neighbors => Stage::Neighbors,
            Command::Report => Stage::Report,
            Command::RunAll => return None,
        })
    }
}

fn report(stage: Stage, outcome: &StageOutcome) {
    match outcome {
        StageOutcome::Ran { outputs } => info!("{stage}: wrote {outputs} files"),
        StageOutcome::Skipped => info!("{stage}: up to date"),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = PipelineConfig::from_file(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    let stage_flag = cli.stage.as_deref().map(str::parse::<Stage>).transpose()?;
    let mut pipeline = Pipeline::new(config)?;
    match (cli.command.as_ref().and_then(Command::stage), stage_flag) {
        (Some(a), Some(b)) if a != b => {
            Err(PipelineError::Validation(format!("subcommand {a} conflicts with --stage {b}")))
        }
        (Some(stage), _) | (None, Some(stage)) if !matches!(cli.command, Some(Command::RunAll)) => {
            let outcome = pipeline.run_stage(stage, cli.force)?;
            report(stage, &outcome);
            Ok(())
        }
        (_, last) => {
            for stage in Stage::ALL {
                if stage == Stage::Eval && pipeline.config().inputs.labels.is_none() {
                    continue;
                }
                let outcome = pipeline.run_stage(stage, cli.force)?;
                report(stage, &outcome);
                if Some(stage) == last {
                    break;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
