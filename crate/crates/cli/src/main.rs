//! Command-line driver: search-space statistics, hardware cost reports,
//! checkpointed searches and report regeneration.

mod commands;
mod config;
mod error;
mod export;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eenas_core::nas::EvaluatorKind;

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "eenas", version, about = "Hardware-aware early-exit architecture search")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// toy, oracle or external.
    #[arg(long, global = true)]
    evaluator: Option<EvaluatorKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the size of the configured search space.
    Space,
    /// Cost one architecture on the configured accelerator.
    Cost {
        /// File holding the chromosome genes.
        #[arg(long)]
        arch: PathBuf,
        /// Comma-separated exit ratios; taken from the evaluator when omitted.
        #[arg(long)]
        exit_ratios: Option<String>,
    },
    /// Run the search, checkpointing the history after every iteration.
    Search {
        /// Continue from the history in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Regenerate the outputs of a search from its history.
    Report {
        /// History file; `<out>/history.jsonl` by default.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Architecture to describe; the most accurate front member by default.
        #[arg(long)]
        hash: Option<String>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let (config, base) = match &cli.config {
        Some(p) => (
            RunConfig::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    let over = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        evaluator: cli.evaluator,
    };
    let resolved = config.resolve(&base, &over)?;
    match cli.command {
        Command::Space => commands::space(&resolved),
        Command::Cost { arch, exit_ratios } => {
            let ratios = exit_ratios.as_deref().map(commands::parse_ratios).transpose()?;
            commands::cost(&resolved, &arch, ratios)
        }
        Command::Search { resume } => commands::search(&resolved, resume),
        Command::Report { history, hash } => commands::report(&resolved, history.as_deref(), hash.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
