//! Recombining binomial approximation of the Black–Scholes market with zero
//! interest.
//!
//! Each step moves the Brownian driver by `±√dt` with market probability 1/2.
//! The martingale probability `q_up` is the unique one making the stock a
//! martingale, so every one-step market is complete and the state-price
//! density `z` is the exact product of `q/p` likelihood ratios along a path.
//! Because the lattice recombines, `z` depends on the node `(k, j)` only.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::export::fmt_sig;

/// Market constants: spot `s0`, volatility `kappa`, drift `theta`, horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub s0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(s0: f64, kappa: f64, theta: f64, horizon: f64) -> Result<Self> {
        let params = Self {
            s0,
            kappa,
            theta,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("s0", self.s0),
            ("kappa", self.kappa),
            ("horizon", self.horizon),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "theta",
                value: self.theta,
            });
        }
        Ok(())
    }

    /// Market price of risk `theta / kappa`.
    pub fn risk_premium(&self) -> f64 {
        self.theta / self.kappa
    }
}

/// Triangular table of per-node values; row `k` holds `k + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Clone> NodeTable<T> {
    pub fn filled(steps: usize, value: T) -> Self {
        Self {
            rows: (0..=steps).map(|k| vec![value.clone(); k + 1]).collect(),
        }
    }
}

impl<T> NodeTable<T> {
    pub fn from_fn(steps: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        Self {
            rows: (0..=steps)
                .map(|k| (0..=k).map(|j| f(k, j)).collect())
                .collect(),
        }
    }

    /// Builds a table from explicit rows; row `k` must have `k + 1` entries.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ZeroSteps);
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::InvalidPayoff(format!(
                    "row {k} has {} entries, expected {}",
                    row.len(),
                    k + 1
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn steps(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.rows[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.rows[k]
    }

    pub fn get(&self, k: usize, j: usize) -> &T {
        &self.rows[k][j]
    }

    pub fn set(&mut self, k: usize, j: usize, value: T) {
        self.rows[k][j] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn map<U>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> NodeTable<U> {
        NodeTable {
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(k, row)| row.iter().enumerate().map(|(j, v)| f(k, j, v)).collect())
                .collect(),
        }
    }
}

impl NodeTable<f64> {
    pub fn all_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }
}

/// One terminal outcome with its weight under both measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalOutcome {
    pub j: usize,
    pub stock: f64,
    pub z: f64,
    pub p_weight: f64,
    pub q_weight: f64,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    params: ModelParams,
    steps: usize,
    dt: f64,
    up: f64,
    down: f64,
    q_up: f64,
    stock: NodeTable<f64>,
    z: NodeTable<f64>,
}

/// Market probability of an up move.
pub const P_UP: f64 = 0.5;

impl Lattice {
    pub fn build(params: ModelParams, steps: usize) -> Result<Self> {
        params.validate()?;
        if steps == 0 {
            return Err(Error::ZeroSteps);
        }
        let dt = params.horizon / steps as f64;
        let drift = (params.theta - 0.5 * params.kappa * params.kappa) * dt;
        let shock = params.kappa * dt.sqrt();
        let log_up = shock + drift;
        let log_down = -shock + drift;
        let up = log_up.exp();
        let down = log_down.exp();
        if !(up > 1.0) {
            return Err(Error::DegenerateFactor {
                factor: "up",
                value: up,
            });
        }
        if !(down < 1.0) {
            return Err(Error::DegenerateFactor {
                factor: "down",
                value: down,
            });
        }
        let q_up = (1.0 - down) / (up - down);

        let ln_s0 = params.s0.ln();
        let stock = NodeTable::from_fn(steps, |k, j| {
            (ln_s0 + j as f64 * log_up + (k - j) as f64 * log_down).exp()
        });
        let ln_zu = (q_up / P_UP).ln();
        let ln_zd = ((1.0 - q_up) / (1.0 - P_UP)).ln();
        let z = NodeTable::from_fn(steps, |k, j| {
            (j as f64 * ln_zu + (k - j) as f64 * ln_zd).exp()
        });

        Ok(Self {
            params,
            steps,
            dt,
            up,
            down,
            q_up,
            stock,
            z,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.params.horizon
        } else {
            k as f64 * self.dt
        }
    }

    pub fn up_factor(&self) -> f64 {
        self.up
    }

    pub fn down_factor(&self) -> f64 {
        self.down
    }

    pub fn p_up(&self) -> f64 {
        P_UP
    }

    pub fn q_up(&self) -> f64 {
        self.q_up
    }

    pub fn stock(&self, k: usize, j: usize) -> f64 {
        *self.stock.get(k, j)
    }

    /// State-price density `dQ/dP` at node `(k, j)`.
    pub fn density(&self, k: usize, j: usize) -> f64 {
        *self.z.get(k, j)
    }

    pub fn stock_table(&self) -> &NodeTable<f64> {
        &self.stock
    }

    pub fn density_table(&self) -> &NodeTable<f64> {
        &self.z
    }

    /// P-expectation of `values` at level `k + 1` conditional on node `(k, j)`.
    #[inline]
    pub fn expect_p(&self, next: &[f64], j: usize) -> f64 {
        P_UP * next[j + 1] + (1.0 - P_UP) * next[j]
    }

    /// Q-expectation of `values` at level `k + 1` conditional on node `(k, j)`.
    #[inline]
    pub fn expect_q(&self, next: &[f64], j: usize) -> f64 {
        self.q_up * next[j + 1] + (1.0 - self.q_up) * next[j]
    }

    /// Node-level weights of level `k` under P and Q.
    pub fn level_weights(&self, k: usize) -> Vec<(f64, f64)> {
        let ln_p = P_UP.ln();
        let ln_1p = (1.0 - P_UP).ln();
        let ln_q = self.q_up.ln();
        let ln_1q = (1.0 - self.q_up).ln();
        (0..=k)
            .map(|j| {
                let ln_c = statrs::function::factorial::ln_binomial(k as u64, j as u64);
                let jf = j as f64;
                let rest = (k - j) as f64;
                (
                    (ln_c + jf * ln_p + rest * ln_1p).exp(),
                    (ln_c + jf * ln_q + rest * ln_1q).exp(),
                )
            })
            .collect()
    }

    pub fn terminal_distribution(&self) -> Vec<TerminalOutcome> {
        let n = self.steps;
        self.level_weights(n)
            .into_iter()
            .enumerate()
            .map(|(j, (p_weight, q_weight))| TerminalOutcome {
                j,
                stock: self.stock(n, j),
                z: self.density(n, j),
                p_weight,
                q_weight,
            })
            .collect()
    }

    /// Debug dump of the node table: `k,j,t,stock,z,p_up,q_up`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,j,t,stock,z,p_up,q_up")?;
        for k in 0..=self.steps {
            for j in 0..=k {
                writeln!(
                    out,
                    "{k},{j},{},{},{},{},{}",
                    fmt_sig(self.time(k)),
                    fmt_sig(self.stock(k, j)),
                    fmt_sig(self.density(k, j)),
                    fmt_sig(P_UP),
                    fmt_sig(self.q_up)
                )?;
            }
        }
        Ok(())
    }
}
