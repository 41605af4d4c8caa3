//! Dual function of the seller's shortfall problem and the threshold ν.
//!
//! For a cancellation payoff `X` and a multiplier `λ > 0`,
//!
//! ```text
//! F(λ) = inf_σ E_P[X_σ · min(1, λ Z_σ)]
//! ```
//!
//! where `Z` is the density of Q with respect to P. Every admissible hedge
//! with capital `x` has risk at least `F(λ) - λx`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::{self, Write};

use crate::dynkin::{optimal_stop_inf, StoppingRule};
use crate::error::{Error, Result};
use crate::export::fmt_sig;
use crate::lattice::{Lattice, ModelParams, NodeTable};

/// `F(λ)` on the lattice with its optimal (first-hitting) stopping rule.
pub fn compute_f(
    lat: &Lattice,
    cancel: &NodeTable<f64>,
    lambda: f64,
) -> Result<(f64, StoppingRule)> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveMultiplier(lambda));
    }
    if cancel.steps() != lat.steps() {
        return Err(Error::InvalidPayoff(format!(
            "payoff has {} steps, lattice has {}",
            cancel.steps(),
            lat.steps()
        )));
    }
    let reward = cancel.map(|k, j, &x| x * (lambda * lat.density(k, j)).min(1.0));
    let sv = optimal_stop_inf(lat, &reward, true);
    Ok((sv.value, sv.rule))
}

/// Sampled dual function.
#[derive(Debug, Clone)]
pub struct DualCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub rules: Vec<StoppingRule>,
}

impl DualCurve {
    /// Evaluates `F` on an increasing grid of positive multipliers.
    pub fn compute(lat: &Lattice, cancel: &NodeTable<f64>, lambdas: &[f64]) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InsufficientSamples("empty multiplier grid".into()));
        }
        if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InsufficientSamples(
                "multipliers must be strictly increasing".into(),
            ));
        }
        let evals: Vec<(f64, StoppingRule)> = lambdas
            .par_iter()
            .map(|&l| compute_f(lat, cancel, l))
            .collect::<Result<_>>()?;
        let (values, rules) = evals.into_iter().unzip();
        Ok(Self {
            lambdas: lambdas.to_vec(),
            values,
            rules,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Slopes of consecutive chords.
    pub fn chord_slopes(&self) -> Vec<f64> {
        self.lambdas
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(l, v)| (v[1] - v[0]) / (l[1] - l[0]))
            .collect()
    }

    /// Symmetric difference slope at sample `i` (one-sided at the ends).
    pub fn slope_at(&self, i: usize) -> Result<f64> {
        let n = self.len();
        if n < 2 || i >= n {
            return Err(Error::InsufficientSamples(format!(
                "slope at sample {i} of {n}"
            )));
        }
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        Ok((self.values[b] - self.values[a]) / (self.lambdas[b] - self.lambdas[a]))
    }

    /// Largest increase of a chord slope over its predecessor (0 when concave).
    pub fn concavity_defect(&self) -> f64 {
        self.chord_slopes()
            .windows(2)
            .map(|s| s[1] - s[0])
            .fold(0.0, f64::max)
    }

    /// CSV with columns `lambda, F` and `F - λx` for every `x`.
    pub fn write_csv<W: Write>(&self, mut out: W, xs: &[f64]) -> io::Result<()> {
        let mut header = vec!["lambda".to_string(), "F".to_string()];
        header.extend(xs.iter().map(|x| format!("bound_x={}", fmt_sig(*x))));
        writeln!(out, "{}", header.join(","))?;
        for (&l, &f) in self.lambdas.iter().zip(&self.values) {
            let mut row = vec![fmt_sig(l), fmt_sig(f)];
            row.extend(xs.iter().map(|&x| fmt_sig(f - l * x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Default multiplier grid: 44 geometric points on `[0.05, 4]`, refined
/// around 2 with steps of 0.01, 64 points in total.
pub fn default_lambda_grid() -> Vec<f64> {
    let (lo, hi) = (0.05f64, 4.0f64);
    let mut grid: Vec<f64> = (0..44)
        .map(|i| lo * (hi / lo).powf(i as f64 / 43.0))
        .collect();
    grid.extend((1..=10).map(|i| 2.0 - 0.01 * i as f64));
    grid.extend((1..=9).map(|i| 2.0 + 0.01 * i as f64));
    grid.push(2.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

/// `max_λ F(λ) - λx` over the sampled curve, clamped at 0.
pub fn lower_bound_r(curve: &DualCurve, x: f64) -> f64 {
    curve
        .lambdas
        .iter()
        .zip(&curve.values)
        .map(|(&l, &f)| f - l * x)
        .fold(0.0, f64::max)
}

/// Left chord slope of `F` at the sample `at`, using the closest sample
/// strictly below it.
pub fn left_derivative_f(curve: &DualCurve, at: f64) -> Result<f64> {
    let i = curve
        .lambdas
        .iter()
        .position(|&l| (l - at).abs() <= 1e-12 * at.abs().max(1.0))
        .ok_or_else(|| Error::InsufficientSamples(format!("λ = {at} is not sampled")))?;
    if i == 0 {
        return Err(Error::InsufficientSamples(format!(
            "no samples below λ = {at}"
        )));
    }
    Ok((curve.values[i] - curve.values[i - 1]) / (curve.lambdas[i] - curve.lambdas[i - 1]))
}

/// `ν = ½ E_P[Z_T 1{Z_T < ½}]` for the model, in closed form.
///
/// With `a = ϑ/κ` and `T` the horizon this is `½ (1 - Φ(ln 2 / (|a|√T) + |a|√T / 2))`.
pub fn compute_nu(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let a = params.risk_premium().abs() * params.horizon.sqrt();
    if a == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::standard();
    Ok(0.5 * (1.0 - normal.cdf(std::f64::consts::LN_2 / a + 0.5 * a)))
}

/// `ν` computed from the terminal distribution of the lattice.
pub fn nu_lattice(lat: &Lattice) -> f64 {
    0.5 * lat
        .terminal_distribution()
        .iter()
        .filter(|o| o.z < 0.5)
        .map(|o| o.p_weight * o.z)
        .sum::<f64>()
}

/// Monte Carlo estimate of `ν` and its standard error.
pub fn nu_monte_carlo(params: &ModelParams, samples: usize, seed: u64) -> Result<(f64, f64)> {
    params.validate()?;
    if samples < 2 {
        return Err(Error::InsufficientSamples(format!("{samples} paths")));
    }
    let a = params.risk_premium();
    let t = params.horizon;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let w: f64 = StandardNormal.sample(&mut rng);
        let z = (-a * w * t.sqrt() - 0.5 * a * a * t).exp();
        let v = if z < 0.5 { 0.5 * z } else { 0.0 };
        sum += v;
        sum_sq += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
