use std::process::ExitCode;

use clap::Parser;
use coassembly_cli::cli::Cli;

fn main() -> ExitCode {
    match coassembly_cli::dispatch(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
