//! `playstate`: session segmentation, skill metrics, symbolic encoding and
//! causal-state modelling of game play records.

mod artifacts;
mod commands;
mod config;
mod error;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::{Overrides, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "playstate", version, about)]
struct Cli {
    /// Flat TOML file of configuration keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace existing outputs of the subcommand.
    #[arg(long, global = true)]
    force: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse the raw dataset into canonical records.
    Ingest,
    /// Cut player histories into sessions.
    Sessions,
    /// Skill profiles, quartiles, curves, quitting and spacing tables.
    Metrics,
    /// Encode sessions as P/G/V/Q symbol streams.
    Encode,
    /// Fit a causal-state machine on the training split.
    Fit,
    /// Score the fitted machine on the test split.
    Evaluate,
    /// Weighted AUC over schemes, thresholds and history lengths.
    Sweep,
    /// Generate synthetic records or symbol streams.
    Synth,
    /// Render a fitted machine as Graphviz DOT.
    ExportDot,
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    let config = RunConfig::load(cli.config.as_deref(), cli.overrides)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let ctx = Context {
        config,
        force: cli.force,
    };
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Sessions => commands::sessions(&ctx),
        Command::Metrics => commands::metrics(&ctx),
        Command::Encode => commands::encode(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Synth => commands::synth(&ctx),
        Command::ExportDot => commands::export_dot_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(cli)));
    let result = outcome.unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(CliError::Internal(msg))
    });
    match result {
        Ok(dir) => {
            println!("outputs in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("playstate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
