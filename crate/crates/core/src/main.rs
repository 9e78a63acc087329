use std::process::ExitCode;

use clap::Parser;
use sparsecast::cli::{run_cli, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run_cli(Cli::parse()) {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
