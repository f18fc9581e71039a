//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

pub mod commands;
pub mod config;
pub mod plot;

use crate::error::Error;
use clap::{Parser, Subcommand};
use config::RunConfig;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Lib(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Lib(e) => match e {
                Error::Domain(_) | Error::Numeric(_) | Error::NotConverged { .. } => 3,
                Error::Contract(_) | Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nigdcs", version, about = "Score-driven NIG models for daily VaR forecasting")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set window=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Loss returns, vacation log, seasonal cycle and diagnostics.
    Prep,
    /// Fit the daily and intraday models on the trailing window.
    Fit,
    /// Rolling one-step-ahead VaR forecasts.
    Forecast,
    /// Coverage and independence tests, MCS ranks and plots.
    Backtest,
    /// Model confidence set on pinball loss.
    Mcs,
    /// Synthetic daily and 10-minute prices with ground truth.
    Simulate,
    /// Print the effective configuration.
    ShowConfig,
}

/// Runs one command against a loaded configuration; returns the report line.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    Ok(match command {
        Command::ShowConfig => cfg.render(),
        Command::Prep => {
            let s = commands::prep(cfg)?;
            format!(
                "prepared {} days{}, {} vacation adjustments",
                s.days,
                s.bars.map(|b| format!(" x {b} bars")).unwrap_or_default(),
                s.adjustments
            )
        }
        Command::Fit => {
            let s = commands::fit(cfg)?;
            if !s.daily_converged || s.slots_converged == Some(false) {
                eprintln!("warning: optimizer did not converge; best point written");
            }
            format!("fitted, daily log-likelihood {:.6}", s.log_likelihood)
        }
        Command::Forecast => {
            let s = commands::forecast(cfg)?;
            if s.unconverged_refits > 0 {
                eprintln!("warning: {} refits did not converge", s.unconverged_refits);
            }
            format!(
                "{} forecasts per level for {}",
                s.rows_per_level,
                s.models.join(", ")
            )
        }
        Command::Backtest => {
            let s = commands::backtest(cfg)?;
            format!(
                "backtested {} at {} levels",
                s.models.join(", "),
                s.levels.len()
            )
        }
        Command::Mcs => format!("{} MCS rows", commands::mcs_table(cfg)?),
        Command::Simulate => {
            let t = commands::simulate(cfg)?;
            format!("simulated {} days (seed {})", t.days, t.seed)
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    match execute(cli.command, &cfg) {
        Ok(line) => {
            println!("{}", line.trim_end());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
