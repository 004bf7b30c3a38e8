use std::process::ExitCode;

use clap::Parser;
use cvlasso::cli::{run, Cli, TOOL};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.message.replace('\n', " ");
            eprintln!("{TOOL}: error: {line}");
            ExitCode::from(e.code as u8)
        }
    }
}
