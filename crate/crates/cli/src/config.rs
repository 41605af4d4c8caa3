//! Flat TOML configuration with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use gameshort_core::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    LineCheck,
    DualCurve,
    Convergence,
    Nonattainment,
    OracleSuite,
    Price,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LineCheck => "line_check",
            Experiment::DualCurve => "dual_curve",
            Experiment::Convergence => "convergence",
            Experiment::Nonattainment => "nonattainment",
            Experiment::OracleSuite => "oracle_suite",
            Experiment::Price => "price",
        }
    }
}

/// Payoff used by the `price` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Counterexample,
    Constant,
    GamePut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub s0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub horizon: f64,
    pub steps: Vec<usize>,
    pub wealth_grid_points: usize,
    /// Capital levels; each experiment has its own default when empty.
    pub x_values: Vec<f64>,
    /// Multipliers for the dual curve; the built-in grid when empty.
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub mc_samples: usize,
    /// Lattice size for the lattice estimate of ν.
    pub nu_lattice_steps: usize,
    pub modulus_paths: usize,
    pub modulus_fine_steps: usize,
    pub instances: usize,
    pub envelope_cases: usize,
    pub payoff: PayoffKind,
    pub strike: f64,
    pub penalty: f64,
    pub constant: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            s0: 1.0,
            kappa: 1.0,
            theta: 1.0,
            horizon: 1.0,
            steps: vec![200],
            wealth_grid_points: 201,
            x_values: Vec::new(),
            lambdas: Vec::new(),
            seed: 20_240_601,
            mc_samples: 1_000_000,
            nu_lattice_steps: 500,
            modulus_paths: 2_000,
            modulus_fine_steps: 1_600,
            instances: 200,
            envelope_cases: 1_000,
            payoff: PayoffKind::Counterexample,
            strike: 1.0,
            penalty: 0.05,
            constant: 1.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        if self.steps.is_empty() || self.steps.contains(&0) {
            bail!("steps must be a nonempty list of positive counts");
        }
        if self.nu_lattice_steps == 0 {
            bail!("nu_lattice_steps must be positive");
        }
        if self.wealth_grid_points < 2 {
            bail!("wealth_grid_points must be at least 2");
        }
        if let Some(x) = self.x_values.iter().find(|x| !(**x >= 0.0)) {
            bail!("x_values must be nonnegative, got {x}");
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0)) {
            bail!("lambdas must be positive, got {l}");
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(
            self.s0,
            self.kappa,
            self.theta,
            self.horizon,
        )?)
    }

    /// Largest step count, the one the thresholds refer to.
    pub fn max_steps(&self) -> usize {
        self.steps.iter().copied().max().unwrap_or(1)
    }
}
