use std::process::ExitCode;

use l2mech_cli::{parse_args, run, CliError};

fn main() -> ExitCode {
    let outcome = parse_args(std::env::args_os()).and_then(|config| run(&config));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Info(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
