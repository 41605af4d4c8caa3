//! Zero-sum Dynkin games on the lattice.
//!
//! The seller (canceller) pays `X` when cancelling strictly before the buyer
//! exercises; otherwise the buyer receives `Y` at exercise. Exercise is only
//! possible on the levels of the exercise set, and the buyer always exercises
//! at maturity if nothing happened before.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeTable, P_UP};

/// Payoff pair of a game option on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GamePayoff {
    exercise: Vec<bool>,
    cancel: Vec<bool>,
    buyer: NodeTable<f64>,
    seller: NodeTable<f64>,
    allow_cancel_at_zero: bool,
}

impl GamePayoff {
    /// `buyer` is the exercise payoff `Y = f_k`, `seller` the cancellation
    /// payoff `X = g_k`. `exercise_levels` must contain 0 and the last level.
    pub fn new(
        exercise_levels: &[usize],
        buyer: NodeTable<f64>,
        seller: NodeTable<f64>,
    ) -> Result<Self> {
        let n = buyer.steps();
        if seller.steps() != n {
            return Err(Error::InvalidPayoff(format!(
                "buyer covers {n} steps, seller covers {}",
                seller.steps()
            )));
        }
        let mut exercise = vec![false; n + 1];
        for &k in exercise_levels {
            if k > n {
                return Err(Error::InvalidPayoff(format!(
                    "exercise level {k} beyond maturity {n}"
                )));
            }
            exercise[k] = true;
        }
        if !exercise[0] || !exercise[n] {
            return Err(Error::InvalidPayoff(
                "exercise set must contain level 0 and maturity".into(),
            ));
        }
        if !buyer.all_finite() || !seller.all_finite() {
            return Err(Error::InvalidPayoff("payoffs must be finite".into()));
        }
        for k in 0..=n {
            if !exercise[k] {
                continue;
            }
            for j in 0..=k {
                let (f, g) = (*buyer.get(k, j), *seller.get(k, j));
                if f < 0.0 {
                    return Err(Error::InvalidPayoff(format!(
                        "negative buyer payoff {f} at node ({k}, {j})"
                    )));
                }
                if f > g {
                    return Err(Error::InvalidPayoff(format!(
                        "buyer payoff {f} exceeds seller payoff {g} at node ({k}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            cancel: exercise.clone(),
            exercise,
            buyer,
            seller,
            allow_cancel_at_zero: true,
        })
    }

    /// Game exercisable at every lattice level.
    pub fn every_level(buyer: NodeTable<f64>, seller: NodeTable<f64>) -> Result<Self> {
        let levels: Vec<usize> = (0..=buyer.steps()).collect();
        Self::new(&levels, buyer, seller)
    }

    pub fn with_cancel_at_zero(mut self, allow: bool) -> Self {
        self.allow_cancel_at_zero = allow;
        self
    }

    /// Restricts cancellation to `levels` (intersected with the exercise set).
    pub fn restrict_cancellation(mut self, levels: &[usize]) -> Self {
        let mut mask = vec![false; self.exercise.len()];
        for &k in levels {
            if k < mask.len() {
                mask[k] = self.exercise[k];
            }
        }
        self.cancel = mask;
        self
    }

    /// Replaces the buyer payoff on level `k` (used to force a stop there).
    pub fn with_buyer_row(mut self, k: usize, row: &[f64]) -> Result<Self> {
        if row.len() != k + 1 {
            return Err(Error::InvalidPayoff(format!(
                "row for level {k} must have {} entries",
                k + 1
            )));
        }
        for (j, &f) in row.iter().enumerate() {
            if !(f >= 0.0 && f <= *self.seller.get(k, j)) {
                return Err(Error::InvalidPayoff(format!(
                    "replacement buyer payoff {f} invalid at node ({k}, {j})"
                )));
            }
        }
        self.buyer.row_mut(k).copy_from_slice(row);
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.buyer.steps()
    }

    pub fn allow_cancel_at_zero(&self) -> bool {
        self.allow_cancel_at_zero
    }

    pub fn is_exercise_level(&self, k: usize) -> bool {
        self.exercise[k]
    }

    pub fn buyer_can_stop(&self, k: usize) -> bool {
        self.exercise[k]
    }

    pub fn seller_can_stop(&self, k: usize) -> bool {
        self.cancel[k] && (k > 0 || self.allow_cancel_at_zero)
    }

    pub fn buyer(&self, k: usize, j: usize) -> f64 {
        *self.buyer.get(k, j)
    }

    pub fn seller(&self, k: usize, j: usize) -> f64 {
        *self.seller.get(k, j)
    }

    pub fn buyer_table(&self) -> &NodeTable<f64> {
        &self.buyer
    }

    pub fn seller_table(&self) -> &NodeTable<f64> {
        &self.seller
    }

    pub(crate) fn check_lattice(&self, lat: &Lattice) -> Result<()> {
        if self.steps() != lat.steps() {
            return Err(Error::InvalidPayoff(format!(
                "payoff has {} steps, lattice has {}",
                self.steps(),
                lat.steps()
            )));
        }
        Ok(())
    }
}

/// One stage of the game: `cancel` is the amount owed when the seller stops
/// first, `exercise` when the buyer stops, `cont` the continuation value.
#[inline]
pub(crate) fn stage(
    seller_may: bool,
    buyer_may: bool,
    cancel: f64,
    exercise: f64,
    cont: f64,
) -> f64 {
    let after_buyer = if buyer_may { exercise.max(cont) } else { cont };
    if seller_may {
        cancel.min(after_buyer)
    } else {
        after_buyer
    }
}

/// Stop/continue decision per index for one player, level by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingRule {
    stops: Vec<Vec<bool>>,
}

impl StoppingRule {
    pub fn new(stops: Vec<Vec<bool>>) -> Self {
        Self { stops }
    }

    pub fn stops_at(&self, level: usize, index: usize) -> bool {
        self.stops[level][index]
    }

    pub fn level(&self, level: usize) -> &[bool] {
        &self.stops[level]
    }

    pub fn levels(&self) -> usize {
        self.stops.len()
    }

    /// First level (if any) where the rule stops somewhere.
    pub fn earliest_stop(&self) -> Option<usize> {
        self.stops.iter().position(|row| row.iter().any(|&s| s))
    }
}

/// Result of a shortfall Dynkin game for a fixed wealth plan.
#[derive(Debug, Clone)]
pub struct GameValue {
    pub value: f64,
    pub psi: NodeTable<f64>,
    pub seller_rule: StoppingRule,
    pub buyer_rule: StoppingRule,
}

/// Backward induction of the shortfall game for a per-node wealth plan `V`:
/// `Ψ_n = (Y - V)⁺`, `Ψ_k = min((X - V)⁺, max((Y - V)⁺, E_P[Ψ_{k+1}]))`.
///
/// Ties resolve to stopping for the player concerned.
pub fn shortfall_game_value(
    lat: &Lattice,
    payoff: &GamePayoff,
    wealth: &NodeTable<f64>,
) -> Result<GameValue> {
    payoff.check_lattice(lat)?;
    let n = lat.steps();
    if wealth.steps() < n {
        return Err(Error::MissingWealth {
            level: wealth.steps() + 1,
        });
    }
    let mut psi = NodeTable::filled(n, 0.0);
    let mut seller = vec![Vec::new(); n + 1];
    let mut buyer = vec![Vec::new(); n + 1];

    for j in 0..=n {
        let v = (payoff.buyer(n, j) - wealth.get(n, j)).max(0.0);
        psi.set(n, j, v);
    }
    seller[n] = vec![true; n + 1];
    buyer[n] = vec![true; n + 1];

    for k in (0..n).rev() {
        let (s_may, b_may) = (payoff.seller_can_stop(k), payoff.buyer_can_stop(k));
        let mut s_row = Vec::with_capacity(k + 1);
        let mut b_row = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let v = *wealth.get(k, j);
            let cancel = (payoff.seller(k, j) - v).max(0.0);
            let exercise = (payoff.buyer(k, j) - v).max(0.0);
            let cont = lat.expect_p(psi.row(k + 1), j);
            let value = stage(s_may, b_may, cancel, exercise, cont);
            psi.set(k, j, value);
            s_row.push(s_may && value == cancel);
            b_row.push(b_may && value == exercise);
        }
        seller[k] = s_row;
        buyer[k] = b_row;
    }

    Ok(GameValue {
        value: *psi.get(0, 0),
        psi,
        seller_rule: StoppingRule::new(seller),
        buyer_rule: StoppingRule::new(buyer),
    })
}

/// Per-node Q-value of the game, `min(X, max(Y, E_Q[next]))` on exercise
/// levels. The root entry is the perfect-hedging price.
pub fn game_values_q(lat: &Lattice, payoff: &GamePayoff) -> Result<NodeTable<f64>> {
    payoff.check_lattice(lat)?;
    let n = lat.steps();
    let mut val = NodeTable::filled(n, 0.0);
    val.row_mut(n).copy_from_slice(payoff.buyer_table().row(n));
    for k in (0..n).rev() {
        let (s_may, b_may) = (payoff.seller_can_stop(k), payoff.buyer_can_stop(k));
        for j in 0..=k {
            let cont = lat.expect_q(val.row(k + 1), j);
            let v = stage(s_may, b_may, payoff.seller(k, j), payoff.buyer(k, j), cont);
            val.set(k, j, v);
        }
    }
    Ok(val)
}

/// Perfect-hedging price of the game option (Dynkin value under Q).
pub fn game_price_q(lat: &Lattice, payoff: &GamePayoff) -> Result<f64> {
    Ok(*game_values_q(lat, payoff)?.get(0, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Market,
    Martingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Value of an optimal stopping problem together with the first-hitting rule.
#[derive(Debug, Clone)]
pub struct StopValue {
    pub value: f64,
    pub values: NodeTable<f64>,
    pub rule: StoppingRule,
}

/// Optimal stopping of `reward` over all lattice levels. Stopping is forced
/// at maturity; with `allow_zero == false` level 0 must continue.
pub fn optimal_stop(
    lat: &Lattice,
    reward: &NodeTable<f64>,
    allow_zero: bool,
    measure: Measure,
    sense: Sense,
) -> StopValue {
    let n = lat.steps();
    let q = match measure {
        Measure::Market => P_UP,
        Measure::Martingale => lat.q_up(),
    };
    let mut values = NodeTable::filled(n, 0.0);
    values.row_mut(n).copy_from_slice(reward.row(n));
    let mut stops = vec![Vec::new(); n + 1];
    stops[n] = vec![true; n + 1];
    for k in (0..n).rev() {
        let may_stop = k > 0 || allow_zero;
        let mut row = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let next = values.row(k + 1);
            let cont = q * next[j + 1] + (1.0 - q) * next[j];
            let now = *reward.get(k, j);
            let (v, stop) = if !may_stop {
                (cont, false)
            } else {
                match sense {
                    Sense::Minimize => (now.min(cont), now <= cont),
                    Sense::Maximize => (now.max(cont), now >= cont),
                }
            };
            values.set(k, j, v);
            row.push(stop);
        }
        stops[k] = row;
    }
    StopValue {
        value: *values.get(0, 0),
        values,
        rule: StoppingRule::new(stops),
    }
}

/// `inf_σ E_P[reward_σ]` by backward induction.
pub fn optimal_stop_inf(lat: &Lattice, reward: &NodeTable<f64>, allow_zero: bool) -> StopValue {
    optimal_stop(lat, reward, allow_zero, Measure::Market, Sense::Minimize)
}
