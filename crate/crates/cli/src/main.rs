use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;
mod error;
mod table;

use args::Cli;
use error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            return fail(&CliError::usage("no command given; see --help"));
        }
        Err(e) => {
            let text = e.to_string();
            let head = text.split("Usage:").next().unwrap_or_default();
            let head = head.split("For more information").next().unwrap_or_default();
            let message = head.split_whitespace().collect::<Vec<_>>().join(" ");
            return fail(&CliError::usage(message.trim_start_matches("error: ")));
        }
    };
    match commands::run(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            match outcome.failure {
                Some(e) => fail(&e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.line());
    ExitCode::from(e.exit_code())
}
