//! Command-line front end: reproducible training, evaluation, attention
//! dumps, gradient verification, and synthetic-corpus generation.
//!
//! Exit codes: 0 success, 1 data/runtime error, 2 usage error.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "attnet",
    version,
    about = "Deep memory network for attitude identification: joint target detection and polarity classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the best snapshot plus a training report.
    Train(commands::train::TrainArgs),
    /// Evaluate a snapshot on a corpus split and write metric reports.
    Eval(commands::eval::EvalArgs),
    /// Dump per-layer attention vectors for inspection.
    Attn(commands::attn::AttnArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Generate a synthetic corpus with derivable labels.
    Gen(commands::gen::GenArgs),
}

fn main() {
    // ATTNET_LOG in {error, info, debug} controls verbosity.
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATTNET_LOG", "info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Attn(args) => commands::attn::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Gen(args) => commands::gen::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(if err.is_usage() { 2 } else { 1 });
    }
}
