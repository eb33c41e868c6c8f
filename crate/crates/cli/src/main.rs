//! `figdetect`: batch driver for figurative-language detection experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend
//! failure, 1 anything else.

mod commands;
mod config;
mod error;
mod run;

use clap::{Parser, Subcommand};

use commands::{analysis, evaluate, prepare, report, serve, train};

#[derive(Debug, Parser)]
#[command(name = "figdetect", version, about = "Figurative language detection experiments")]
struct Cli {
    /// More log output (-v debug, -vv trace). `RUST_LOG` takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest source datasets into the canonical prepared corpus.
    Prepare(prepare::PrepareArgs),
    /// Train every model of an experiment and evaluate it.
    Train(train::TrainArgs),
    /// Print the resolved experiment configuration.
    Config(train::ConfigArgs),
    /// Evaluate a trained run on some tasks.
    Evaluate(evaluate::EvalArgs),
    /// Evaluate a trained run on languages it never saw.
    ZeroShot(evaluate::EvalArgs),
    /// Cross-lingual transfer matrix of one figure.
    Transfer(analysis::TransferArgs),
    /// Per-task accuracy difference between two templates.
    PromptDiff(analysis::PromptDiffArgs),
    /// Idiom reuse between training and held-out data.
    Overlap(analysis::OverlapArgs),
    /// Render tables from stored experiment records and analyses.
    Report(report::ReportArgs),
    #[command(hide = true)]
    AdapterServe(serve::ServeArgs),
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Prepare(a) => prepare::run(a),
        Command::Train(a) => train::run(a),
        Command::Config(a) => train::show_config(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::ZeroShot(a) => evaluate::zero_shot(a),
        Command::Transfer(a) => analysis::transfer(a),
        Command::PromptDiff(a) => analysis::prompt_diff_cmd(a),
        Command::Overlap(a) => analysis::overlap(a),
        Command::Report(a) => report::run(a),
        Command::AdapterServe(a) => serve::run(a),
    };
    if let Err(e) = result {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
