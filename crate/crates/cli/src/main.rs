use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{CommandFactory, FromArgMatches, Parser};
use gameshort_cli::config::{Experiment, ExperimentConfig, PayoffKind};
use gameshort_cli::experiments;

/// Shortfall-risk experiments for game options on a binomial lattice.
#[derive(Debug, Parser)]
#[command(name = "gameshort", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lattice sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Wealth grid points per node.
    #[arg(long)]
    grid: Option<usize>,
    /// Capital levels, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo paths and random instances.
    #[arg(long)]
    seed: Option<u64>,
    /// Payoff for the price experiment.
    #[arg(long, value_enum)]
    payoff: Option<PayoffKind>,
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(steps) = cli.steps {
        cfg.steps = steps;
    }
    if let Some(grid) = cli.grid {
        cfg.wealth_grid_points = grid;
    }
    if let Some(x) = cli.x {
        cfg.x_values = x;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(payoff) = cli.payoff {
        cfg.payoff = payoff;
    }
    let report = experiments::run(cli.experiment, &cfg)?;
    for c in &report.checks {
        println!(
            "{} {:<48} {:>14.6e}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(report.passed())
}

/// Every configuration key with its default, as a TOML file.
fn defaults_help() -> String {
    let text = toml::to_string(&ExperimentConfig::default()).unwrap_or_default();
    format!("Configuration keys (TOML) and their defaults:\n\n{text}")
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(defaults_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
