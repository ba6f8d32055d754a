//! `mclab`: batch driver for operator checks, field analysis, flow runs and
//! the lemma-verification suite.
//!
//! Exit codes: 0 pass, 1 usage or IO error, 2 finding (a checked property
//! fails), 3 inconclusive, 4 runtime failure.

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("runtime error{}: {msg}", t.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    Runtime { t: Option<f64>, msg: String },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), msg: e.to_string() }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Runtime { .. } => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for reports and data files.
    #[arg(long, default_value = "mclab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
#[command(name = "mclab", version, about = "Numerical laboratory for constant-rank and convexity-preservation checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample ellipticity and the inverse-convexity form of an operator.
    CheckOperator(Args),
    /// Hessian rank, test function and inequality fits on a sampled field.
    AnalyzeField(Args),
    /// Run a graph or curve flow with monitors.
    Flow(Args),
    /// Run the numerical checks of the symmetric-function lemmas.
    VerifyLemmas(Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let r = match &cli.cmd {
        Cmd::CheckOperator(a) => commands::check_operator(a),
        Cmd::AnalyzeField(a) => commands::analyze_field(a),
        Cmd::Flow(a) => commands::flow(a),
        Cmd::VerifyLemmas(a) => commands::verify_lemmas(a),
    };
    match r {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("mclab: {e}");
            ExitCode::from(e.code())
        }
    }
}
