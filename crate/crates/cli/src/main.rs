mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                commands::CliError::Usage(_) => ExitCode::from(2),
                commands::CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
