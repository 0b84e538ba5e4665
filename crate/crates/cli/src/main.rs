// Negated comparisons are the NaN-rejecting form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

mod cli;
mod commands;
mod report;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = cli::Cli::parse();
    let outcome = match commands::run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let written = match &cli.global.output {
        Some(path) => std::fs::write(path, &outcome.text).map_err(anyhow::Error::from),
        None => std::io::stdout().write_all(outcome.text.as_bytes()).map_err(anyhow::Error::from),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::FAILURE;
    }
    if outcome.failed {
        eprintln!("run reported failures");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
