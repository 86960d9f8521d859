use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use curvflow_cli::{configure_threads, execute, version, Cli};

fn main() -> ExitCode {
    let matches = Cli::command().version(version()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let threads = std::env::var("CURVFLOW_THREADS").ok();
    let outcome = configure_threads(threads.as_deref()).and_then(|()| execute(cli.command));
    match outcome {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("curvflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
