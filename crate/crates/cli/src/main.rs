//! `headrouter` command-line tool: synthetic data, calibration, pruning,
//! method comparison, and overhead benchmarks.

mod commands;
mod inputs;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, calibrate, compare, prune, synth};

/// Exit code for unreadable, missing, or malformed inputs and bad flags.
const EXIT_INPUT: u8 = 2;
/// Exit code for well-formed inputs that violate a domain invariant.
const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "headrouter", version, about = "Audio token pruning with attention-head routing")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic sample bundles.
    Synth(synth::Args),
    /// Estimate a profile bank from labeled bundles.
    Calibrate(calibrate::Args),
    /// Prune one bundle and write a report.
    Prune(prune::Args),
    /// Compare methods across ratios on a directory of bundles.
    Compare(compare::Args),
    /// Time the pipeline stages on a random bundle.
    Bench(bench::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<headrouter::Error>()) {
        Some(e) if !e.is_input_error() => EXIT_INVARIANT,
        _ => EXIT_INPUT,
    }
}

/// Error chain joined with `: `, skipping causes whose text the previous
/// message already includes.
fn render(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    let mut prev = out.clone();
    for cause in err.chain().skip(1) {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            out.push_str(": ");
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Synth(a) => synth::run(&a, &argv),
        Command::Calibrate(a) => calibrate::run(&a, &argv),
        Command::Prune(a) => prune::run(&a, &argv),
        Command::Compare(a) => compare::run(&a, &argv),
        Command::Bench(a) => bench::run(&a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
