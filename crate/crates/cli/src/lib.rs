//! Scenario files, the built-in registry and report rendering behind the
//! `weakvar` binary.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod registry;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RawScenario;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "weakvar", version, about = "Weak measurement pointer simulation and first-order predictions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weak value, weak moments and system diagnostics.
    WeakValue {
        #[command(flatten)]
        common: Common,
        /// Highest weak moment order.
        #[arg(long, default_value_t = 3)]
        orders: u32,
    },
    /// Exact post-selected pointer next to the first-order predictions.
    Simulate(Common),
    /// First-order predictions only.
    Predict(Common),
    /// Identity, rate and convergence-order suites.
    Verify(Common),
    /// One row per coupling or per value of the swept parameter.
    Sweep(Common),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// Overrides `constants.gamma`.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    pub format: Format,
    #[arg(long)]
    pub no_timestamp: bool,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

impl Common {
    pub fn raw(&self) -> CliResult<RawScenario> {
        let mut raw = match (&self.config, &self.scenario) {
            (Some(path), _) => RawScenario::from_file(path)?,
            (None, Some(name)) => registry::scenario(name)?,
            (None, None) => return Err(CliError::config("--config", "either --config or --scenario is required")),
        };
        if let Some(g) = self.gamma {
            raw.set("constants.gamma", g)?;
        }
        Ok(raw)
    }

    fn timestamp(&self) -> Option<u64> {
        if self.no_timestamp {
            return None;
        }
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }

    fn render<T: serde::Serialize>(&self, report: &T) -> String {
        match self.format {
            Format::Structured => report::structured(report),
            Format::Csv => report::flat_csv(report),
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("weakvar: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command) -> CliResult<i32> {
    let common = match command {
        Command::Scenarios => {
            registry::names().for_each(|n| println!("{n}"));
            return Ok(0);
        }
        Command::WeakValue { common, .. }
        | Command::Simulate(common)
        | Command::Predict(common)
        | Command::Verify(common)
        | Command::Sweep(common) => common,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| CliError::config("--workers", e.to_string()))?;
    pool.install(|| execute(command, common))
}

fn execute(command: &Command, common: &Common) -> CliResult<i32> {
    let raw = common.raw()?;
    let ts = common.timestamp();
    let out = common.out.as_deref();
    match command {
        Command::Sweep(_) => {
            let rows = report::sweep(&raw)?;
            let text = match common.format {
                Format::Csv => report::sweep_csv(&rows, ts),
                Format::Structured => report::structured(&SweepReport { generated_at_unix: ts, rows: &rows }),
            };
            emit(&text, out)?;
            for row in &rows {
                if let Err(e) = &row.outcome {
                    eprintln!("weakvar: point {} ({} = {}): {}", row.index, row.parameter, row.value, e.message);
                }
            }
            match rows.iter().find_map(|r| r.outcome.as_ref().err()) {
                Some(e) if rows.iter().all(|r| r.outcome.is_err()) => Ok(e.exit_code),
                _ => Ok(0),
            }
        }
        Command::WeakValue { orders, .. } => {
            let s = raw.load()?;
            emit(&common.render(&report::weak_value(&s, *orders, ts)?), out)?;
            Ok(0)
        }
        Command::Simulate(_) => {
            let s = raw.load()?;
            emit(&common.render(&report::simulate(&s, ts)?), out)?;
            Ok(0)
        }
        Command::Predict(_) => {
            let s = raw.load()?;
            emit(&common.render(&report::predict(&s, ts)?), out)?;
            Ok(0)
        }
        Command::Verify(_) => {
            let s = raw.load()?;
            emit(&common.render(&report::verify(&s, ts)?), out)?;
            Ok(0)
        }
        Command::Scenarios => unreachable!("handled before loading"),
    }
}

#[derive(serde::Serialize)]
struct SweepReport<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    rows: &'a [report::SweepRow],
}
