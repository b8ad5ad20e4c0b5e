use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featmom::harness::{main_entry, Command};

#[derive(Parser)]
#[command(name = "featmom", version, about = "Feature-momentum GNN training and compositional optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded SBM dataset (edges.txt, features.csv, labels.csv, splits.csv).
    GenData(RunArgs),
    /// Train with in-batch feature momentum (sampled neighborhoods).
    TrainIb(RunArgs),
    /// Train on cluster batches with out-of-batch histories.
    TrainOb(RunArgs),
    /// Exact full-batch training.
    TrainFull(RunArgs),
    /// Train both out-of-batch modes to their best epoch and compare staleness.
    Staleness(RunArgs),
    /// Run the compositional optimization testbed.
    Compopt(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value` overrides applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::GenData(a) => (Command::GenData, a),
        Cmd::TrainIb(a) => (Command::TrainIb, a),
        Cmd::TrainOb(a) => (Command::TrainOb, a),
        Cmd::TrainFull(a) => (Command::TrainFull, a),
        Cmd::Staleness(a) => (Command::Staleness, a),
        Cmd::Compopt(a) => (Command::Compopt, a),
    };
    let code = main_entry(cmd, args.config.as_deref(), &args.out, &args.overrides);
    ExitCode::from(code as u8)
}
