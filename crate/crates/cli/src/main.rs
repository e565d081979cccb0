use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use itr_cli::cli::{run, Cli};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_env("ITR_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("itr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
