mod args;
mod commands;
mod demo;
mod error;
mod io;
mod oracle;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliResult;

/// Exit status for command-line usage errors.
const USAGE_EXIT: u8 = 64;

fn configure_threads() {
    let Ok(value) = std::env::var("FLOWFORGE_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("warning: could not size the thread pool: {e}");
            }
        }
        _ => eprintln!("warning: ignoring FLOWFORGE_THREADS={value:?}"),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Factor(a) => commands::factor(&a),
        Command::Compile(a) => commands::compile_cmd(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Demo(a) => {
            for path in demo::run(&a.name, &a.output)? {
                println!("wrote {path}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_EXIT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
