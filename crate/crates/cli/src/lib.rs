//! Command-line front end. Every subcommand writes its outputs plus a JSON
//! run manifest; failures map to distinct exit codes.

pub mod args;
pub mod commands;

use std::path::PathBuf;
use std::time::Instant;

use isodecon_core::{io::write_json, Error, Result};
use serde::Serialize;
use serde_json::Value;

pub use args::{Cli, Command};

/// Written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub outputs: Vec<PathBuf>,
    pub wall_seconds: f64,
}

pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const IO: u8 = 5;
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => exit::CONFIG,
        Error::InvalidParameter(_) | Error::InvalidInput(_) | Error::Numeric(_) => exit::NUMERIC,
        Error::Io(_) | Error::Csv(_) => exit::IO,
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Resolvent(_) => "resolvent",
        Command::Iie(_) => "iie",
        Command::Iip(_) => "iip",
        Command::Interval(_) => "interval",
        Command::Calibrate(_) => "calibrate",
        Command::Coverage(_) => "coverage",
        Command::Figures(_) => "figures",
        Command::Simulate(_) => "simulate",
    }
}

/// Runs one subcommand and writes its manifest. The rayon pool must be
/// configured by the caller.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let start = Instant::now();
    let seed = cli.seed;
    let outcome = match &cli.command {
        Command::Resolvent(a) => commands::resolvent(a, seed),
        Command::Iie(a) => commands::estimate(a, seed),
        Command::Iip(a) => commands::posterior(a, seed),
        Command::Interval(a) => commands::interval(a, seed),
        Command::Calibrate(a) => commands::calibrate(a, seed),
        Command::Coverage(a) => commands::coverage(a, seed),
        Command::Figures(a) => commands::figures(a, seed),
        Command::Simulate(a) => commands::simulate(a, seed),
    }?;
    let manifest = RunManifest {
        command: name(&cli.command).to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: outcome.seed,
        threads: rayon::current_num_threads(),
        config: outcome.config,
        outputs: outcome.outputs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&outcome.manifest, &manifest)?;
    Ok(manifest)
}
