//! `synergy-lab`: every pipeline stage behind one command.
//!
//! Each subcommand prints a single JSON object on stdout when it succeeds.
//! Exit codes: 1 usage or malformed input, 2 inconsistent or infeasible
//! data, 3 solver non-convergence. Set `SYNERGY_LAB_LOG` (e.g. `debug`) for
//! diagnostics on stderr.

mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, Failure};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SYNERGY_LAB_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    match commands::run(cli) {
        Ok(payload) => {
            let _ = writeln!(std::io::stdout().lock(), "{payload}");
            ExitCode::SUCCESS
        }
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
