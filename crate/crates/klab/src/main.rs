use std::process::ExitCode;

use clap::Parser;
use klab::cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()).code())
}
