use std::process::ExitCode;

use clap::Parser;
use oosguard_cli::cli::Cli;
use oosguard_cli::{commands, configure_threads};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
