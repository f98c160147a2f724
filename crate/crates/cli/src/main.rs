//! `rjacobi`: spectral bounds, solves, method comparisons and EV fleet
//! simulations from the command line.
//!
//! Exit codes: 0 success, 1 not converged (artifacts still written),
//! 2 configuration error, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::NotConverged;
use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "rjacobi",
    version,
    about = "Regularized Jacobi iteration for multi-agent quadratic programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of Q and Q_z and the thresholds on c, as JSON.
    Bounds(CommonArgs),
    /// Run one method on a problem file; writes trace.csv and solution.json.
    Solve(CommonArgs),
    /// Jacobi and gradient traces from the same start, plus a sweep of c.
    Compare(CommonArgs),
    /// Aggregate-form fleet charging run; writes trace.csv, profile.csv and report.json.
    EvSim(CommonArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return 1;
    }
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<rjacobi::Error>())
        .any(rjacobi::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, f): (&CommonArgs, fn(&RunConfig) -> anyhow::Result<()>) = match &cli.command {
        Command::Bounds(a) => (a, commands::bounds),
        Command::Solve(a) => (a, commands::solve),
        Command::Compare(a) => (a, commands::compare),
        Command::EvSim(a) => (a, commands::ev_sim),
    };
    let result = RunConfig::resolve(args).and_then(|cfg| f(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    msg = format!("{msg}: {text}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
