//! `stsp`: batch front end for the stereospace toolkit.

use std::process::ExitCode;

use clap::Parser;

use stereospace_cli::args::Cli;
use stereospace_cli::output::CliError;
use stereospace_cli::{commands, THREADS_ENV};

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{THREADS_ENV} must be a thread count, got {v:?}"))),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.global.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    log::debug!("worker threads: {}", rayon::current_num_threads());
    commands::dispatch(&cli.global, cli.command)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(1)
        }
    }
}
