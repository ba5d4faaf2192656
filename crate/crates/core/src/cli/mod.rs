//! Command-line scenario runner.
//!
//! Exit status: 0 when every enabled check passes, 1 on a failed check,
//! 2 on a configuration error and 3 when a run expected to converge does not.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
pub use config::ScenarioConfig;
pub use run::{build_bundle, check, run, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spfun", version, about = "Singular perturbation stability checks and simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify the configured certificate and simulate its initial conditions.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "t-final")]
        t_final: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Verification only; no simulation.
    Check { config: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>, t_final: Option<f64>) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = t_final {
        match cfg.simulation.as_mut() {
            Some(sim) => sim.t_final = t,
            None => return Err(Error::InvalidConfig("--t-final needs a [simulation] table".into())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Io(_) => EXIT_CONFIG,
        Error::StepUnderflow { .. } | Error::NonPositiveRate { .. } => EXIT_DIVERGED,
        _ => EXIT_CHECK_FAILED,
    }
}

fn report_failure(report: &crate::report::Report) {
    if let Some(f) = report.first_failure() {
        eprintln!(
            "error: check {} failed (worst margin {:e}){}",
            f.name,
            f.worst_margin,
            if f.witness.is_empty() { String::new() } else { format!(" at {}", f.witness) }
        );
    }
}

/// Runs the parsed command and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Check { config } => load(&config, None, None).and_then(|cfg| {
            let bundle = build_bundle(&cfg)?;
            let report = check(&cfg, &bundle)?;
            print!("{}", report.to_table());
            print!("{}", report.to_kv());
            report_failure(&report);
            Ok(if report.pass() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }),
        Command::Run {
            config,
            out,
            seed,
            t_final,
            quiet,
        } => load(&config, seed, t_final).and_then(|cfg| {
            let outcome = run(&cfg, &out)?;
            if !quiet {
                print!("{}", outcome.report.to_table());
                println!("wrote {} files to {}", outcome.files.len(), out.display());
            }
            if let Some(msg) = &outcome.unexpected_divergence {
                eprintln!("error: {msg}");
            }
            report_failure(&outcome.report);
            Ok(outcome.exit_code())
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        error_code(&e)
    })
}

pub fn main() -> i32 {
    execute(Cli::parse())
}
