//! `prevci` command line: `ci` computes intervals, `simulate` runs coverage
//! scenarios.

mod ci;
mod simulate;

use std::ffi::OsString;

use clap::{Parser, Subcommand};
use prevci::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "prevci", version, about = "Confidence intervals for disease prevalence from surveys")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute confidence intervals from survey data.
    Ci(ci::CiArgs),
    /// Run coverage simulation scenarios and write metrics as CSV.
    Simulate(simulate::SimulateArgs),
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Ci(args) => ci::run(&args),
        Command::Simulate(args) => simulate::run(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_infeasible() => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}
