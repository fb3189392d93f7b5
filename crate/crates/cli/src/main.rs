#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Free;

fn run(cli: Cli) -> striate::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return config::bad("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| striate::Error::Invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::EstimateRange(a) => commands::estimate("estimate-range", Free::Range, a),
        Command::EstimateWi(a) => commands::estimate("estimate-wi", Free::Beta, a),
        Command::EstimateRate(a) => commands::estimate("estimate-rate", Free::Rate, a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ais(a) => commands::ais(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let text = e.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
