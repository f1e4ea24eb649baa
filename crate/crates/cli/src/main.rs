mod args;
mod check;
mod commands;
mod netspec;
mod output;

use std::process::ExitCode;

use clap::Parser;
use gridmor_core::Error;

use args::{Cli, Command};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn init_logging() {
    let env = env_logger::Env::new().filter_or("GRIDMOR_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Lift(a) => commands::lift(a).map(|_| true),
        Command::Reduce(a) => commands::reduce(a).map(|_| true),
        Command::Simulate(a) => commands::simulate(a).map(|_| true),
        Command::Sweep(a) => commands::sweep(a).map(|_| true),
        Command::Check(a) => check::check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more invariant checks failed");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL })
        }
    }
}
