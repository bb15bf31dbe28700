mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use commands::{Cli, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(CliError::Clap(e)) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let config = match config::config_path(&argv) {
        Some(path) => config::ConfigFile::load(path.as_ref()).map_err(CliError::Usage)?,
        None => config::ConfigFile::default(),
    };
    let argv = config::merge_into_argv(argv, &Cli::command(), &config).map_err(CliError::Usage)?;
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    commands::dispatch(cli, &config)
}
