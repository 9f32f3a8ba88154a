use std::process::ExitCode;

use clap::Parser;
use swimtrack_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("swimtrack: {err}");
            ExitCode::from(err.code as u8)
        }
    }
}
