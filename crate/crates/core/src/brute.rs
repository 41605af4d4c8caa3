//! Exhaustive reference implementations for small instances.
//!
//! Nothing here shares code with the backward-induction solvers beyond the
//! lattice and payoff containers; the functions enumerate stopping times on
//! explicit history trees, chords of point sets, and vertices of the
//! one-step transfer polytope.

use crate::dynkin::GamePayoff;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeTable, P_UP};
use crate::shortfall::{HedgePlan, WealthGrid};

/// Convex envelope at every knot as the minimum over all chords spanning it.
pub fn envelope_by_chords(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let m = knots.len();
    (0..m)
        .map(|k| {
            let mut best = values[k];
            for i in 0..=k {
                for j in k..m {
                    if i == j {
                        continue;
                    }
                    let t = (knots[k] - knots[i]) / (knots[j] - knots[i]);
                    best = best.min(values[i] + t * (values[j] - values[i]));
                }
            }
            best
        })
        .collect()
}

/// Node of a non-recombining history tree.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryNode {
    pub level: usize,
    /// Lattice node index on `level`.
    pub node: usize,
    pub wealth: f64,
    /// Probability of the history under P and under Q.
    pub p: f64,
    pub q: f64,
    pub children: Vec<usize>,
}

/// Explicit tree of histories; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTree {
    pub nodes: Vec<HistoryNode>,
}

impl HistoryTree {
    /// Every stock path of the lattice, with wealth `wealth(k, j)`.
    pub fn binomial(lat: &Lattice, wealth: &NodeTable<f64>) -> Result<Self> {
        let n = lat.steps();
        if n > 12 {
            return Err(Error::InvalidParameter {
                name: "steps",
                value: n as f64,
            });
        }
        let q_up = lat.q_up();
        let mut nodes = vec![HistoryNode {
            level: 0,
            node: 0,
            wealth: *wealth.get(0, 0),
            p: 1.0,
            q: 1.0,
            children: Vec::new(),
        }];
        let mut frontier = vec![0usize];
        for k in 0..n {
            let mut next = Vec::new();
            for &id in &frontier {
                for up in [false, true] {
                    let parent = &nodes[id];
                    let j = parent.node + usize::from(up);
                    let (pm, qm) = if up {
                        (P_UP, q_up)
                    } else {
                        (1.0 - P_UP, 1.0 - q_up)
                    };
                    let child = HistoryNode {
                        level: k + 1,
                        node: j,
                        wealth: *wealth.get(k + 1, j),
                        p: parent.p * pm,
                        q: parent.q * qm,
                        children: Vec::new(),
                    };
                    nodes.push(child);
                    let cid = nodes.len() - 1;
                    nodes[id].children.push(cid);
                    next.push(cid);
                }
            }
            frontier = next;
        }
        Ok(Self { nodes })
    }

    /// Histories of a hedge plan (including its randomizations).
    pub fn from_plan(lat: &Lattice, plan: &HedgePlan) -> Self {
        let q_up = lat.q_up();
        let levels = plan.levels();
        let root = &levels[0][0];
        let mut nodes = vec![HistoryNode {
            level: 0,
            node: root.node,
            wealth: root.wealth,
            p: 1.0,
            q: 1.0,
            children: Vec::new(),
        }];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, si)) = stack.pop() {
            let k = nodes[id].level;
            if k + 1 >= levels.len() {
                continue;
            }
            for t in &levels[k][si].next {
                let target = &levels[k + 1][t.state];
                let (pm, qm) = if t.up {
                    (P_UP, q_up)
                } else {
                    (1.0 - P_UP, 1.0 - q_up)
                };
                let parent = &nodes[id];
                let child = HistoryNode {
                    level: k + 1,
                    node: target.node,
                    wealth: target.wealth,
                    p: parent.p * pm * t.weight,
                    q: parent.q * qm * t.weight,
                    children: Vec::new(),
                };
                nodes.push(child);
                let cid = nodes.len() - 1;
                nodes[id].children.push(cid);
                stack.push((cid, t.state));
            }
        }
        Self { nodes }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(0, &mut out);
        out
    }

    fn collect_leaves(&self, id: usize, out: &mut Vec<usize>) {
        if self.nodes[id].children.is_empty() {
            out.push(id);
        } else {
            for &c in &self.nodes[id].children {
                self.collect_leaves(c, out);
            }
        }
    }

    /// All stopping times as the stopping node of every leaf (leaves in
    /// [`leaves`](Self::leaves) order). Stopping on a level is allowed when
    /// `may_stop(level)`; every history stops at its leaf at the latest.
    pub fn stopping_times(&self, may_stop: &dyn Fn(usize) -> bool) -> Vec<Vec<usize>> {
        self.times_from(0, may_stop)
    }

    fn times_from(&self, id: usize, may_stop: &dyn Fn(usize) -> bool) -> Vec<Vec<usize>> {
        let node = &self.nodes[id];
        if node.children.is_empty() {
            return vec![vec![id]];
        }
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for &c in &node.children {
            let sub = self.times_from(c, may_stop);
            let mut grown = Vec::with_capacity(combos.len() * sub.len());
            for prefix in &combos {
                for s in &sub {
                    let mut v = prefix.clone();
                    v.extend_from_slice(s);
                    grown.push(v);
                }
            }
            combos = grown;
        }
        if may_stop(node.level) {
            let width = combos[0].len();
            combos.push(vec![id; width]);
        }
        combos
    }
}

/// Which expectation and which settlement amount to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    /// `E_P[(H - V)⁺]` with the wealth stored in the tree.
    Shortfall,
    /// `E_Q[H]`, the pricing game.
    Price,
}

/// Inf-sup and sup-inf of a Dynkin game by enumeration of all stopping pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleValues {
    pub inf_sup: f64,
    pub sup_inf: f64,
}

/// Enumerates every seller time `σ` and buyer time `τ` on the tree.
pub fn dynkin_saddle(tree: &HistoryTree, payoff: &GamePayoff, kind: GameKind) -> SaddleValues {
    let leaves = tree.leaves();
    let sigmas = tree.stopping_times(&|k| payoff.seller_can_stop(k));
    let taus = tree.stopping_times(&|k| payoff.buyer_can_stop(k));
    let payout = |s: usize, t: usize| -> f64 {
        let (ns, nt) = (&tree.nodes[s], &tree.nodes[t]);
        let (node, amount) = if ns.level < nt.level {
            (ns, payoff.seller(ns.level, ns.node))
        } else {
            (nt, payoff.buyer(nt.level, nt.node))
        };
        match kind {
            GameKind::Shortfall => (amount - node.wealth).max(0.0),
            GameKind::Price => amount,
        }
    };
    let weight = |leaf: usize| -> f64 {
        match kind {
            GameKind::Shortfall => tree.nodes[leaf].p,
            GameKind::Price => tree.nodes[leaf].q,
        }
    };
    let table: Vec<Vec<f64>> = sigmas
        .iter()
        .map(|s| {
            taus.iter()
                .map(|t| {
                    leaves
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| weight(l) * payout(s[i], t[i]))
                        .sum()
                })
                .collect()
        })
        .collect();
    let inf_sup = table
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let sup_inf = (0..taus.len())
        .map(|c| table.iter().map(|row| row[c]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    SaddleValues { inf_sup, sup_inf }
}

/// `sup_τ E_P[(H(σ, τ) - V)⁺]` for one fixed seller time (leaf order).
pub fn best_response_brute(tree: &HistoryTree, payoff: &GamePayoff, sigma: &[usize]) -> f64 {
    let leaves = tree.leaves();
    tree.stopping_times(&|k| payoff.buyer_can_stop(k))
        .iter()
        .map(|tau| {
            leaves
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let (ns, nt) = (&tree.nodes[sigma[i]], &tree.nodes[tau[i]]);
                    let (node, amount) = if ns.level < nt.level {
                        (ns, payoff.seller(ns.level, ns.node))
                    } else {
                        (nt, payoff.buyer(nt.level, nt.node))
                    };
                    tree.nodes[l].p * (amount - node.wealth).max(0.0)
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `inf_σ E[reward_σ]` (or sup) over every stopping time of the binomial tree.
pub fn optimal_stop_brute(
    lat: &Lattice,
    reward: &NodeTable<f64>,
    allow_zero: bool,
    use_q: bool,
    minimize: bool,
) -> Result<f64> {
    let tree = HistoryTree::binomial(lat, &NodeTable::filled(lat.steps(), 0.0))?;
    let leaves = tree.leaves();
    let values = tree
        .stopping_times(&|k| k > 0 || allow_zero)
        .into_iter()
        .map(|s| {
            leaves
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let w = if use_q {
                        tree.nodes[l].q
                    } else {
                        tree.nodes[l].p
                    };
                    let stop = &tree.nodes[s[i]];
                    w * reward.get(stop.level, stop.node)
                })
                .sum::<f64>()
        });
    Ok(if minimize {
        values.fold(f64::INFINITY, f64::min)
    } else {
        values.fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Minimal shortfall risk by recursion over explicit states.
///
/// At every state the seller chooses to cancel or continue, the buyer to
/// exercise or continue, and the budget is transferred to the children by
/// enumerating the vertices of the polytope of randomized grid-valued
/// allocations: pure grid pairs, and pairs where one child mixes two grid
/// points so that the budget is spent exactly.
pub fn shortfall_brute(lat: &Lattice, payoff: &GamePayoff, grid: &WealthGrid, x: f64) -> f64 {
    state_value(lat, payoff, grid, 0, 0, x)
}

fn state_value(
    lat: &Lattice,
    payoff: &GamePayoff,
    grid: &WealthGrid,
    k: usize,
    j: usize,
    z: f64,
) -> f64 {
    let n = lat.steps();
    let exercise = (payoff.buyer(k, j) - z).max(0.0);
    if k == n {
        return exercise;
    }
    let cancel = (payoff.seller(k, j) - z).max(0.0);
    let cont = transfer_brute(lat, payoff, grid, k, j, z);

    let mut seller_options = vec![];
    if payoff.seller_can_stop(k) {
        // simultaneous stopping pays Y ≤ X, so the buyer lets the seller cancel
        seller_options.push(cancel);
    }
    let mut buyer_options = vec![cont];
    if payoff.buyer_can_stop(k) {
        buyer_options.push(exercise);
    }
    seller_options.push(buyer_options.into_iter().fold(f64::NEG_INFINITY, f64::max));
    seller_options.into_iter().fold(f64::INFINITY, f64::min)
}

fn transfer_brute(
    lat: &Lattice,
    payoff: &GamePayoff,
    grid: &WealthGrid,
    k: usize,
    j: usize,
    z: f64,
) -> f64 {
    let q_up = lat.q_up();
    let kids = [(j, 1.0 - P_UP, 1.0 - q_up), (j + 1, P_UP, q_up)];
    let pts: Vec<Vec<f64>> = kids.iter().map(|&(c, _, _)| grid.grid(k + 1, c)).collect();
    let vals: Vec<Vec<f64>> = kids
        .iter()
        .zip(&pts)
        .map(|(&(c, _, _), g)| {
            g.iter()
                .map(|&w| state_value(lat, payoff, grid, k + 1, c, w))
                .collect()
        })
        .collect();
    let slack = 1e-12 * z.max(1.0);
    let mut best = f64::INFINITY;
    for a in 0..pts[0].len() {
        for b in 0..pts[1].len() {
            let cost = kids[0].2 * pts[0][a] + kids[1].2 * pts[1][b];
            if cost <= z + slack {
                best = best.min(kids[0].1 * vals[0][a] + kids[1].1 * vals[1][b]);
            }
        }
    }
    for mix in 0..2 {
        let other = 1 - mix;
        let (pm, qm) = (kids[mix].1, kids[mix].2);
        let (po, qo) = (kids[other].1, kids[other].2);
        for o in 0..pts[other].len() {
            let rest = z - qo * pts[other][o];
            for a in 0..pts[mix].len() {
                for b in a + 1..pts[mix].len() {
                    let (lo, hi) = (pts[mix][a], pts[mix][b]);
                    let t = (rest / qm - lo) / (hi - lo);
                    if !(0.0..=1.0).contains(&t) {
                        continue;
                    }
                    let v =
                        pm * ((1.0 - t) * vals[mix][a] + t * vals[mix][b]) + po * vals[other][o];
                    best = best.min(v);
                }
            }
        }
    }
    best
}
