use std::process::ExitCode;

use clap::Parser;
use saddlerisk_cli::{main_with, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_with(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("saddlerisk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
