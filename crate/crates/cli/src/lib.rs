//! Command-line driver: configuration, data ingestion, run directories and
//! the subcommands that wire the inference library together.
//!
//! Every run writes `config.toml` (the resolved configuration, seed
//! included) and `run.json` into its output directory. `run.json` carries a
//! `status` of `incomplete`, `complete` or `failed`; a failed run also leaves
//! `error.json` with a machine-readable code.

pub mod commands;
pub mod config;
pub mod data;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::{DataSection, RunConfig, SCHEMA_VERSION};
use crate::output::{write_json, RunDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gpo_abc::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "E_CONFIG",
            CliError::Data(_) => "E_DATA",
            CliError::Io { .. } => "E_IO",
            CliError::Output(_) => "E_OUTPUT",
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate returns (or copy CSV input) into `simulation.csv`.
    Simulate,
    /// GPO on SMC log-posterior estimates; writes the Laplace posterior and trace.
    InferGpo,
    /// Particle Metropolis-Hastings chain.
    InferPmh,
    /// SPSA ascent on the log-posterior.
    InferSpsa,
    /// Repeated GPO runs over a grid of ABC tolerances.
    EpsilonSweep,
    /// Margins, t-copula, Monte Carlo VaR and back-test.
    VarPipeline,
    /// Count violations of an existing VaR series.
    Backtest,
    /// Tidy CSV tables from an existing run directory.
    ExportPlotData,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::InferGpo => "infer-gpo",
            Command::InferPmh => "infer-pmh",
            Command::InferSpsa => "infer-spsa",
            Command::EpsilonSweep => "epsilon-sweep",
            Command::VarPipeline => "var-pipeline",
            Command::Backtest => "backtest",
            Command::ExportPlotData => "export-plot-data",
        }
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "gpoabc", version, about = "Likelihood-free inference for stochastic volatility models")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    schema_version: u32,
    command: Command,
    seed: u64,
    status: &'a str,
    version: &'a str,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    code: &'a str,
    message: String,
}

fn absolutise(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

/// Relative input paths are taken relative to the configuration file.
fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    if let Some(DataSection::Csv { path, .. }) = &mut cfg.data {
        absolutise(path, base);
    }
    if let Some(b) = &mut cfg.backtest {
        absolutise(&mut b.input, base);
    }
    if let Some(e) = &mut cfg.export {
        absolutise(&mut e.input, base);
    }
}

fn prepare(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&cli.config)?.resolve(cli.command, cli.seed)?;
    let base = cli
        .config
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(base).map_err(|e| CliError::io(base, e))?;
    resolve_paths(&mut cfg, &base);
    Ok(cfg)
}

fn record(dir: &RunDir, cfg: &RunConfig, command: Command, status: &str) -> Result<(), CliError> {
    write_json(
        &dir.path("run.json"),
        &RunRecord {
            schema_version: SCHEMA_VERSION,
            command,
            seed: cfg.seed.expect("resolved seed"),
            status,
            version: env!("CARGO_PKG_VERSION"),
        },
    )
}

fn execute(cli: &Cli, dir: &RunDir) -> Result<(), CliError> {
    let cfg = prepare(cli)?;
    let text = cfg.to_toml();
    if std::fs::read_to_string(dir.path("config.toml")).ok().as_deref() != Some(text.as_str()) {
        dir.remove("state.json")?;
    }
    dir.write_text("config.toml", &text)?;
    record(dir, &cfg, cli.command, "incomplete")?;
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    let result = pool.install(|| commands::dispatch(cli.command, &cfg, dir));
    record(dir, &cfg, cli.command, if result.is_ok() { "complete" } else { "failed" })?;
    result
}

/// Runs one command; on failure `error.json` is written to the output
/// directory before the error is returned.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let dir = RunDir::create(&cli.out)?;
    dir.remove("error.json")?;
    let result = execute(cli, &dir);
    if let Err(e) = &result {
        write_json(
            &dir.path("error.json"),
            &ErrorRecord {
                code: e.code(),
                message: e.to_string(),
            },
        )?;
    }
    result
}
