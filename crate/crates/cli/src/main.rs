mod experiment;
mod tools;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sptoken_core::harness::{Algorithm, ExperimentKind, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "sptoken", version, about = "Token-based route learning experiments and ledger tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single token, fixed OD pair, one intermittent jam.
    Exp1(ExpArgs),
    /// As exp1 plus a second jam on the learned detour.
    Exp2(ExpArgs),
    /// Token-count scaling with a test vehicle.
    Exp3(ExpArgs),
    /// UCB Q-learning against MUBEV.
    Exp4(ExpArgs),
    /// Road network generation and state merging.
    #[command(subcommand)]
    Net(NetCommand),
    /// Adaptive proof-of-work.
    #[command(subcommand)]
    Apow(ApowCommand),
    /// Ledger log inspection.
    #[command(subcommand)]
    Ledger(LedgerCommand),
}

#[derive(Debug, Args)]
struct ExpArgs {
    /// JSON file laid over the experiment preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Token counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    tokens: Option<Vec<usize>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    /// Run the learners without the ledger.
    #[arg(long)]
    no_ledger: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output subdirectory name instead of the current UTC time.
    #[arg(long)]
    stamp: Option<String>,
}

#[derive(Debug, Subcommand)]
enum NetCommand {
    /// Write a synthetic grid network as JSON.
    Gen(tools::GenArgs),
    /// Merge a network into states and write the merged graph.
    Merge(tools::MergeArgs),
}

#[derive(Debug, Subcommand)]
enum ApowCommand {
    /// Simulate one round from a JSON description.
    Round(tools::RoundArgs),
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Replay a ledger log and print its sites as JSON lines.
    Dump(tools::DumpArgs),
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

/// Bad user input; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn is_config(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some() || c.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_config)
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Exp1(a) => experiment::run(ExperimentKind::Exp1, a),
        Command::Exp2(a) => experiment::run(ExperimentKind::Exp2, a),
        Command::Exp3(a) => experiment::run(ExperimentKind::Exp3, a),
        Command::Exp4(a) => experiment::run(ExperimentKind::Exp4, a),
        Command::Net(NetCommand::Gen(a)) => tools::net_gen(a),
        Command::Net(NetCommand::Merge(a)) => tools::net_merge(a),
        Command::Apow(ApowCommand::Round(a)) => tools::apow_round(a),
        Command::Ledger(LedgerCommand::Dump(a)) => tools::ledger_dump(a),
    }
}

fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().and_then(|e| e.io_error_kind()) == Some(std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_config(&err) { 2 } else { 3 })
        }
    }
}
