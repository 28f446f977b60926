use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use rayclass_core::multiquad::MultiquadField;
use rayclass_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "rayclass",
    version,
    about = "Ray class fields of multiquadratic fields at split primes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Subfields, units, norm -1 status and class number of a field.
    FieldReport,
    /// The criterion at a single prime with per-l diagnostics.
    Check,
    /// The criterion at each of the first N primes.
    Scan,
    /// Conjectural density interval, optionally with an empirical count.
    Density,
    /// Compare the criterion with the subgroup-order oracle at every split p ≤ B.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Comma-separated radicals, e.g. "5,13".
    #[arg(long, global = true)]
    pub field: Option<String>,
    #[arg(long, global = true)]
    pub prime: Option<u64>,
    #[arg(long, global = true)]
    pub num_primes: Option<usize>,
    #[arg(long, global = true)]
    pub cutoff: Option<u64>,
    #[arg(long, global = true)]
    pub bound: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl Flags {
    fn or(self, file: Flags) -> Flags {
        Flags {
            config: self.config,
            field: self.field.or(file.field),
            prime: self.prime.or(file.prime),
            num_primes: self.num_primes.or(file.num_primes),
            cutoff: self.cutoff.or(file.cutoff),
            bound: self.bound.or(file.bound),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            workers: self.workers.or(file.workers),
            seed: self.seed.or(file.seed),
        }
    }
}

/// Validated options for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub field: MultiquadField,
    pub prime: Option<u64>,
    pub num_primes: Option<usize>,
    pub cutoff: Option<u64>,
    pub bound: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub workers: usize,
    pub seed: u64,
}

fn read_config_file(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Error::Input(format!("invalid config {}: {e}", path.display())))
}

fn required<T>(value: Option<T>, name: &str, command: Command) -> Result<T> {
    value.ok_or_else(|| Error::Input(format!("{command:?} needs --{name}")))
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<RunConfig> {
        let flags = match &flags.config {
            Some(path) => {
                let file = read_config_file(path)?;
                flags.or(file)
            }
            None => flags,
        };
        let field: MultiquadField = required(flags.field, "field", command)?.parse()?;
        let workers = flags
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
        if workers == 0 {
            return Err(Error::Input("--workers must be positive".into()));
        }
        let default_format = if command == Command::Scan {
            Format::Csv
        } else {
            Format::Text
        };
        let format = flags.format.unwrap_or(default_format);
        if format == Format::Csv && command != Command::Scan {
            return Err(Error::Input("csv output is only available for scan".into()));
        }
        if format == Format::Text && command == Command::Scan {
            return Err(Error::Input("scan writes csv or json".into()));
        }
        let config = RunConfig {
            command,
            field,
            prime: flags.prime,
            num_primes: flags.num_primes,
            cutoff: flags.cutoff,
            bound: flags.bound,
            out: flags.out,
            format,
            workers,
            seed: flags.seed.unwrap_or(0),
        };
        match command {
            Command::Check => {
                required(config.prime, "prime", command)?;
            }
            Command::Scan => {
                if required(config.num_primes, "num-primes", command)? == 0 {
                    return Err(Error::Input("--num-primes must be positive".into()));
                }
            }
            Command::Density => {
                required(config.cutoff, "cutoff", command)?;
                if config.num_primes == Some(0) {
                    return Err(Error::Input("--num-primes must be positive".into()));
                }
            }
            Command::Verify => {
                required(config.bound, "bound", command)?;
            }
            Command::FieldReport => {}
        }
        Ok(config)
    }
}
