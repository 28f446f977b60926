//! Command-line front end for `rayclass-core`.

pub mod commands;
pub mod config;

use std::io::Write;

use clap::Parser;

use rayclass_core::{Error, Result};

use config::{Cli, Command, RunConfig};

/// Process exit status for each error kind.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Domain(_) => 1,
        Error::Unsupported(_) => 2,
        Error::Resource(_) => 3,
        Error::Undecided(_) => 4,
        Error::Invariant(_) => 5,
    }
}

pub fn execute(cfg: &RunConfig) -> Result<commands::Report> {
    match cfg.command {
        Command::FieldReport => commands::field_report(cfg),
        Command::Check => commands::check(cfg),
        Command::Scan => commands::scan_command(cfg),
        Command::Density => commands::density(cfg),
        Command::Verify => commands::verify(cfg),
    }
}

fn write_output(cfg: &RunConfig, body: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(body.as_bytes())
            .map_err(|e| Error::Input(format!("cannot write to standard output: {e}"))),
    }
}

fn run_parsed(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.command, cli.flags)?;
    let report = execute(&cfg)?;
    write_output(&cfg, &report.body)?;
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Runs the program on `args` and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
