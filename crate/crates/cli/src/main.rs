use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match cda_cli::run(cda_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
