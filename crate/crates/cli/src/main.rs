//! Batch front end: every command writes its artifacts plus a run manifest
//! into one output directory, and `replay` re-runs a manifest and compares
//! digests. Exit codes: 0 ok, 1 numerical failure, 2 usage.

// Validation guards use `!(x > 0.0)` so NaN trips the same branch as a
// bad sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "loewner",
    version,
    about = "Loewner evolution laboratory: traces, continuity in kappa, rough paths"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Csv,
    Svg,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoughMode {
    LiftCheck,
    KappaContinuity,
    Rde,
    RdeContinuity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one approximate trace from a seeded Brownian driver.
    Trace(TraceArgs),
    /// Tabulate trace distances along a kappa sequence (coupled driver).
    CompareKappa(CompareArgs),
    /// Level-2 rough-path checks and the backward RDE.
    Roughpath(RoughArgs),
    /// Sample a driver path and dump it with its manifest.
    Driver(DriverArgs),
    /// Dump grid evaluations of a single slit block (debug aid).
    SlitGrid(SlitGridArgs),
    /// Re-run a recorded manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Parser)]
pub struct TraceArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Coarse interpolation knots (power of two).
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_horizon: f64,
    /// Tip height; defaults to 1e-3/sqrt(n).
    #[arg(long)]
    pub y_tip: Option<f64>,
    /// Fine Brownian mesh (power of two, multiple of n).
    #[arg(long, default_value_t = 1 << 16)]
    pub fine_n: usize,
    #[arg(long, value_enum, default_value_t = TraceFormat::Csv)]
    pub format: TraceFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key=value defaults file (flags win).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Comma list ("2.5,2.25,2.125") or geometric spec ("+2^-1..8").
    #[arg(long, default_value = "+2^-1..8", allow_hyphen_values = true)]
    pub kappa_seq: String,
    #[arg(long, default_value_t = 1 << 16)]
    pub fine_n: usize,
    #[arg(long, default_value_t = 4096)]
    pub reference_n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_horizon: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct RoughArgs {
    #[arg(long, value_enum)]
    pub mode: RoughMode,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Kappa sequence for the continuity modes.
    #[arg(long, default_value = "+2^-1..8", allow_hyphen_values = true)]
    pub kappa_seq: String,
    /// p-variation exponent in (2, 3].
    #[arg(long, default_value_t = 2.5)]
    pub p: f64,
    /// Dyadic grid intervals for the lift.
    #[arg(long, default_value_t = 1 << 12)]
    pub mesh: usize,
    /// RDE steps (dyadic divisor of the mesh).
    #[arg(long, default_value_t = 1 << 10)]
    pub steps: usize,
    /// Start point "re,im" for the RDE modes.
    #[arg(long, default_value = "0,1")]
    pub z0: String,
    #[arg(long, default_value_t = 1.0)]
    pub t_horizon: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct DriverArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1 << 16)]
    pub fine_n: usize,
    /// Emit the square-root interpolation at this coarse resolution instead
    /// of the raw driver.
    #[arg(long)]
    pub interp_n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub t_horizon: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SlitGridArgs {
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct ReplayArgs {
    /// Manifest to replay.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to re-run; defaults to a sibling of the manifest directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failures split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(1),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("io error: {e}"))
    }
}

/// Expand `--config file` into missing flags before clap sees the argv.
/// The file holds `key=value` lines (long flag names without dashes);
/// explicit flags always win.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path: Option<String> = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(rest) = a.strip_prefix("--config=") {
            path = Some(rest.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let mut out = argv.clone();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {} is not key=value: {line}",
                lineno + 1
            )));
        };
        let flag = format!("--{}", key.trim());
        let present = argv
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !present {
            out.push(flag);
            out.push(value.trim().to_string());
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.code();
        }
    };
    let cli = Cli::parse_from(argv);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
