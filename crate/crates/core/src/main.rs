use std::process::ExitCode;

use clap::Parser;
use dqnlab::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dqnlab: {e}");
            ExitCode::FAILURE
        }
    }
}
