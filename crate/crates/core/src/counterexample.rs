//! A game option on `[0, 1]` whose shortfall minimizer does not exist for
//! small capital, and the restricted cancellation classes used to diagnose it.
//!
//! Payoffs: `X_t = (1 + sin πt) · max(Z_t, ½)`, `Y_t = 0` for `t < 1` and
//! `Y_1 = X_1`. With `λ = 2` the dual reward `X · min(1, 2Z) = (1 + sin πt) Z`
//! has `F(2) = 1`, so every hedge with capital `x` has risk at least `1 - 2x`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynkin::{GamePayoff, StoppingRule};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, ModelParams, NodeTable};
use crate::shortfall::{risk_of_plan, solve_surface, GridSpec, HedgePlan};

/// Cancellation payoff `X` on every node.
pub fn counterexample_cancel(lat: &Lattice) -> Result<NodeTable<f64>> {
    if (lat.params().horizon - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: lat.params().horizon,
        });
    }
    let n = lat.steps();
    Ok(NodeTable::from_fn(n, |k, j| {
        let t = lat.time(k);
        // sin(π) is not exactly zero in floating point
        let bump = if k == 0 || k == n {
            0.0
        } else {
            (PI * t).sin()
        };
        (1.0 + bump) * lat.density(k, j).max(0.5)
    }))
}

/// The game option itself, exercisable and cancellable on every level.
pub fn counterexample_payoff(lat: &Lattice) -> Result<GamePayoff> {
    let x = counterexample_cancel(lat)?;
    let n = lat.steps();
    let y = x.map(|k, _, &v| if k == n { v } else { 0.0 });
    GamePayoff::every_level(y, x)
}

/// Risk of each restricted cancellation class at capital `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRisks {
    /// Cancel immediately.
    pub immediate: f64,
    /// Never cancel before maturity.
    pub maturity: f64,
    /// Settle strictly inside `(0, 1)`.
    pub interior: f64,
}

impl ClassRisks {
    /// Excess of each class over the line `1 - 2x`.
    pub fn excess(&self, x: f64) -> ClassRisks {
        let line = 1.0 - 2.0 * x;
        ClassRisks {
            immediate: self.immediate - line,
            maturity: self.maturity - line,
            interior: self.interior - line,
        }
    }
}

/// Cancel at time 0 holding the capital untouched: risk `(X_0 - x)⁺`.
pub fn immediate_class_risk(lat: &Lattice, payoff: &GamePayoff, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeCapital(x));
    }
    let n = lat.steps();
    let plan = HedgePlan::from_node_wealth(lat, &NodeTable::filled(n, x))?;
    let stops = (0..=n).map(|k| vec![k == 0 || k == n; k + 1]).collect();
    risk_of_plan(lat, payoff, &plan, &StoppingRule::new(stops))
}

/// Payoff where the seller may only cancel at maturity.
pub fn maturity_class(payoff: &GamePayoff) -> GamePayoff {
    let n = payoff.steps();
    payoff.clone().restrict_cancellation(&[n])
}

/// Game that must settle on a level in `1..n`: the lattice is cut after
/// level `n - 1` (same nodes and step), the buyer is paid `X` there, and the
/// seller may not cancel at 0.
pub fn interior_class(lat: &Lattice) -> Result<(Lattice, GamePayoff)> {
    let n = lat.steps();
    if n < 2 {
        return Err(Error::InvalidPayoff(
            "interior settlement needs at least two steps".into(),
        ));
    }
    let x = counterexample_cancel(lat)?;
    let mut params = *lat.params();
    params.horizon = lat.time(n - 1);
    let cut = Lattice::build(params, n - 1)?;
    let seller = NodeTable::from_rows(x.rows().take(n).map(<[f64]>::to_vec).collect())?;
    let buyer = seller.map(|k, _, &v| if k == n - 1 { v } else { 0.0 });
    let payoff = GamePayoff::every_level(buyer, seller)?.with_cancel_at_zero(false);
    Ok((cut, payoff))
}

/// Best risk inside every class for the counterexample payoff.
pub fn class_risks(lat: &Lattice, x: f64, spec: GridSpec) -> Result<ClassRisks> {
    let payoff = counterexample_payoff(lat)?;
    let immediate = immediate_class_risk(lat, &payoff, x)?;
    let maturity = solve_surface(lat, &maturity_class(&payoff), spec)?.risk_at(x);
    let (cut, inner) = interior_class(lat)?;
    let interior = solve_surface(&cut, &inner, spec)?.risk_at(x);
    Ok(ClassRisks {
        immediate,
        maturity,
        interior,
    })
}

/// Static hedge of `X_n` at maturity: cover nodes in decreasing order of
/// `p/q` until the capital runs out.
pub fn maturity_static_risk(lat: &Lattice, payoff: &GamePayoff, x: f64) -> f64 {
    let n = lat.steps();
    let w = lat.level_weights(n);
    let mut nodes: Vec<(f64, f64, f64)> = (0..=n)
        .map(|j| (w[j].0, w[j].1, payoff.buyer(n, j)))
        .collect();
    nodes.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
    let mut left = x;
    let mut risk = 0.0;
    for (p, q, claim) in nodes {
        let covered = (left / q).min(claim).max(0.0);
        left -= covered * q;
        risk += p * (claim - covered);
    }
    risk
}

/// Monte Carlo estimate of `E_P[sup_{|t-s| ≤ 1/n} |X_t - X_s|]` for each `n`
/// in `windows`, from `paths` Brownian paths sampled on `fine` steps of
/// `[0, 1]`. Returns `(mean, standard error)` per window.
pub fn payoff_modulus(
    params: &ModelParams,
    windows: &[usize],
    fine: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    if (params.horizon - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: params.horizon,
        });
    }
    if paths < 2 {
        return Err(Error::InsufficientSamples(format!("{paths} paths")));
    }
    for &n in windows {
        if n == 0 || fine % n != 0 {
            return Err(Error::InvalidParameter {
                name: "window",
                value: n as f64,
            });
        }
    }
    let a = params.risk_premium();
    let dt = 1.0 / fine as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sums = vec![(0.0, 0.0); windows.len()];
    let mut x = vec![0.0; fine + 1];
    for _ in 0..paths {
        let mut w = 0.0;
        for (i, xi) in x.iter_mut().enumerate() {
            if i > 0 {
                let g: f64 = StandardNormal.sample(&mut rng);
                w += g * dt.sqrt();
            }
            let t = i as f64 * dt;
            let z = (-a * w - 0.5 * a * a * t).exp();
            *xi = (1.0 + (PI * t).sin()) * z.max(0.5);
        }
        for (slot, &n) in sums.iter_mut().zip(windows) {
            let v = window_range(&x, fine / n);
            slot.0 += v;
            slot.1 += v * v;
        }
    }
    let m = paths as f64;
    Ok(sums
        .into_iter()
        .map(|(s, sq)| {
            let mean = s / m;
            let var = (sq / m - mean * mean).max(0.0) * m / (m - 1.0);
            (mean, (var / m).sqrt())
        })
        .collect())
}

/// Largest `max - min` over all windows of `width + 1` consecutive samples.
fn window_range(x: &[f64], width: usize) -> f64 {
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for i in 0..x.len() {
        while hi.back().is_some_and(|&b| x[b] <= x[i]) {
            hi.pop_back();
        }
        while lo.back().is_some_and(|&b| x[b] >= x[i]) {
            lo.pop_back();
        }
        hi.push_back(i);
        lo.push_back(i);
        while hi[0] + width < i {
            hi.pop_front();
        }
        while lo[0] + width < i {
            lo.pop_front();
        }
        best = best.max(x[hi[0]] - x[lo[0]]);
    }
    best
}
