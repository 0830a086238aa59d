use std::process::ExitCode;

use clap::Parser;
use wban::cli::{execute, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Metrics(a) => a.common.quiet,
        Command::Simulate(a)
        | Command::Sweep(a)
        | Command::GenTraces(a)
        | Command::OverlayTraces(a) => a.common.quiet,
    };
    match execute(cli) {
        Ok(report) => {
            if !quiet {
                print!("{report}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
