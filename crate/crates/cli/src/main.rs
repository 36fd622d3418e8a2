use std::process::ExitCode;

use abrlab_cli::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("abrlab: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
