use std::process::ExitCode;

use clap::Parser;
use mcanc::io::cli::{execute, Cli, EXIT_FAILURE};

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which this tool reserves for
    // diverged runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_FAILURE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
