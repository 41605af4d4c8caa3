//! Pass/fail checks and the machine-readable run summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("<= {limit}"),
            pass: measured <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!(">= {limit}"),
            pass: measured >= limit,
        }
    }

    pub fn greater(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("> {limit}"),
            pass: measured > limit,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&measured),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            ..Self::default()
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write_summary(&mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.summary.json", self.experiment));
        self.files.push(path.clone());
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
