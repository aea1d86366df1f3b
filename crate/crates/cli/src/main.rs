//! `liquidity`: experiment runner for the random-exchange economy.
//!
//! Exit status: 0 on success, 1 for an invalid configuration or input,
//! 2 for a runtime failure (outputs written so far are kept), 3 when
//! `compare` runs but the tolerances are not met.

mod commands;
mod compare;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "liquidity", version, about = "Liquidity and wealth inequality in a random-exchange economy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Solver tolerance, overriding the configuration.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of one economy
    Simulate(Common),
    /// Self-consistent mean-field solution
    Solve(Common),
    /// Success rates across a grid of Pareto exponents
    Sweep(Common),
    /// Exact stationary success rates of a tiny economy
    Oracle(Common),
    /// Pareto exponent from a wealth-share table
    Fit(Common),
    /// Gini coefficient of the wealth samples
    Gini(Common),
    /// Check simulated success rates against a solver output
    Compare(compare::CompareArgs),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Failed(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => commands::run("simulate", &c, commands::simulate),
        Command::Solve(c) => commands::run("solve", &c, commands::solve),
        Command::Sweep(c) => commands::run("sweep", &c, commands::sweep),
        Command::Oracle(c) => commands::run("oracle", &c, commands::oracle),
        Command::Fit(c) => commands::run("fit", &c, commands::fit),
        Command::Gini(c) => commands::run("gini", &c, commands::gini),
        Command::Compare(a) => compare::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
    }
}
