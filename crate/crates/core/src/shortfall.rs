//! Minimal shortfall risk of a game option and the hedge attaining it.
//!
//! Backward pass: on every node the value `B_k(·, node)` is sampled on a
//! uniform wealth grid over `[0, zmax(node)]`, where `zmax` is the Q-value of
//! the remaining game. At maturity `B_n(z) = (Y - z)⁺`; before that
//!
//! ```text
//! B_k(z) = min((X - z)⁺, max((Y - z)⁺, C_k(z)))
//! ```
//!
//! on exercise levels, with `C_k(z)` the optimal transfer of budget `z` to the
//! two children evaluated against their convexified slices. Each slice is
//! convexified before it is handed to the parent; the convex envelope is what
//! the parent can reach by randomizing the child wealth between grid points.
//! The root is never convexified since the time-0 information is trivial.
//!
//! Forward pass: starting from `D_0 = x`, every state `(node, wealth)` spends
//! its whole budget on the children (Q-martingale wealth), splitting the
//! child wealth onto envelope knots where needed, and cancels at the first
//! state where `B = (X - D)⁺`.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::dynkin::{game_values_q, stage, GamePayoff, StoppingRule};
use crate::envelope::{lower_hull, randomize_to_envelope, PiecewiseLinearFn};
use crate::error::{Error, Result};
use crate::export::fmt_sig;
use crate::lattice::{Lattice, NodeTable, P_UP};
use crate::transfer::{ChildHull, Frontier};

/// Wealth discretization settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Points per node grid, including both endpoints.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 201 }
    }
}

/// Per-node uniform wealth grids on `[0, zmax(node)]`.
#[derive(Debug, Clone)]
pub struct WealthGrid {
    zmax: NodeTable<f64>,
    points: usize,
}

impl WealthGrid {
    pub fn new(lat: &Lattice, payoff: &GamePayoff, spec: GridSpec) -> Result<Self> {
        if spec.points < 2 {
            return Err(Error::GridTooSmall(spec.points));
        }
        Ok(Self {
            zmax: game_values_q(lat, payoff)?,
            points: spec.points,
        })
    }

    pub fn zmax(&self, k: usize, j: usize) -> f64 {
        *self.zmax.get(k, j)
    }

    pub fn zmax_table(&self) -> &NodeTable<f64> {
        &self.zmax
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of grid points at the node; a node with `zmax = 0` has only 0.
    pub fn len(&self, k: usize, j: usize) -> usize {
        if self.zmax(k, j) > 0.0 {
            self.points
        } else {
            1
        }
    }

    pub fn is_empty(&self, _k: usize, _j: usize) -> bool {
        false
    }

    pub fn point(&self, k: usize, j: usize, i: usize) -> f64 {
        let zmax = self.zmax(k, j);
        if i + 1 >= self.len(k, j) {
            if i == 0 {
                0.0
            } else {
                zmax
            }
        } else {
            zmax * (i as f64 / (self.points - 1) as f64)
        }
    }

    pub fn grid(&self, k: usize, j: usize) -> Vec<f64> {
        (0..self.len(k, j)).map(|i| self.point(k, j, i)).collect()
    }
}

#[derive(Debug, Clone)]
struct NodeSlice {
    raw: Vec<f64>,
    hull: Vec<u32>,
}

/// Sampled value function `B_k(·, node)` for every node.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    grid: WealthGrid,
    slices: Vec<Vec<NodeSlice>>,
    payoff: GamePayoff,
    q_up: f64,
    root_frontier: Frontier,
}

impl ValueSurface {
    pub fn grid(&self) -> &WealthGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    /// Sampled values before convexification.
    pub fn raw_slice(&self, k: usize, j: usize) -> (Vec<f64>, &[f64]) {
        (self.grid.grid(k, j), &self.slices[k][j].raw)
    }

    /// Convexified slice; `None` on nodes whose grid is the single point 0.
    pub fn convex_slice(&self, k: usize, j: usize) -> Option<PiecewiseLinearFn> {
        let s = &self.slices[k][j];
        if s.hull.len() < 2 {
            return None;
        }
        let grid = self.grid.grid(k, j);
        let knots = s.hull.iter().map(|&i| grid[i as usize]).collect();
        let values = s.hull.iter().map(|&i| s.raw[i as usize]).collect();
        PiecewiseLinearFn::new(knots, values).ok()
    }

    /// `B_k(z, node)`: exact at the root, convexified interpolation elsewhere;
    /// 0 beyond `zmax`.
    pub fn value_at(&self, k: usize, j: usize, z: f64) -> f64 {
        if k == 0 {
            return self.risk_at(z);
        }
        if z >= self.grid.zmax(k, j) {
            return 0.0;
        }
        match self.convex_slice(k, j) {
            Some(f) => f.eval(z.max(0.0)).unwrap_or(0.0),
            None => self.slices[k][j].raw[0],
        }
    }

    /// Minimal shortfall risk for initial capital `x`.
    pub fn risk_at(&self, x: f64) -> f64 {
        if x >= self.grid.zmax(0, 0) {
            return 0.0;
        }
        self.stage_value(0, 0, x, &self.root_frontier).0
    }

    /// Root slice on the root wealth grid.
    pub fn root_curve(&self) -> Vec<(f64, f64)> {
        let (grid, raw) = self.raw_slice(0, 0);
        grid.into_iter().zip(raw.iter().copied()).collect()
    }

    /// CSV dump of the root slice: `z,B_0`.
    pub fn write_root_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "z,B_0")?;
        for (z, b) in self.root_curve() {
            writeln!(out, "{},{}", fmt_sig(z), fmt_sig(b))?;
        }
        Ok(())
    }

    fn frontier(&self, k: usize, j: usize) -> Frontier {
        build_frontier(&self.grid, &self.slices[k + 1], k, j, self.q_up)
    }

    /// Stage value at wealth `w` and the seller's cancellation amount.
    fn stage_value(&self, k: usize, j: usize, w: f64, frontier: &Frontier) -> (f64, f64) {
        let cancel = (self.payoff.seller(k, j) - w).max(0.0);
        let exercise = (self.payoff.buyer(k, j) - w).max(0.0);
        let value = stage(
            self.payoff.seller_can_stop(k),
            self.payoff.buyer_can_stop(k),
            cancel,
            exercise,
            frontier.value(w),
        );
        (value, cancel)
    }

    /// Maximum violation of convexity or monotonicity over all stored
    /// convexified slices, and the largest `|B(zmax)| / max(1, zmax)`.
    pub fn shape_defects(&self) -> (f64, f64) {
        let mut shape = 0.0f64;
        let mut top = 0.0f64;
        for k in 1..=self.steps() {
            for j in 0..=k {
                let s = &self.slices[k][j];
                // relative: capacities reach e^14 on deep lattices
                let scale = self.grid.zmax(k, j).max(1.0);
                top = top.max(s.raw[s.raw.len() - 1].abs() / scale);
                if let Some(f) = self.convex_slice(k, j) {
                    let slopes = f.slopes();
                    for w in slopes.windows(2) {
                        shape = shape.max(w[0] - w[1]);
                    }
                    for s in slopes {
                        shape = shape.max(s);
                    }
                }
            }
        }
        (shape, top)
    }
}

fn build_frontier(
    grid: &WealthGrid,
    next: &[NodeSlice],
    k: usize,
    j: usize,
    q_up: f64,
) -> Frontier {
    let down = grid.grid(k + 1, j);
    let up = grid.grid(k + 1, j + 1);
    let children = [
        ChildHull {
            p: 1.0 - P_UP,
            q: 1.0 - q_up,
            grid: &down,
            values: &next[j].raw,
            hull: &next[j].hull,
        },
        ChildHull {
            p: P_UP,
            q: q_up,
            grid: &up,
            values: &next[j + 1].raw,
            hull: &next[j + 1].hull,
        },
    ];
    Frontier::build(&children)
}

fn hull_of(grid: &[f64], raw: &[f64]) -> Vec<u32> {
    lower_hull(grid, raw)
        .into_iter()
        .map(|i| i as u32)
        .collect()
}

/// Backward pass producing the value surface.
pub fn solve_surface(lat: &Lattice, payoff: &GamePayoff, spec: GridSpec) -> Result<ValueSurface> {
    payoff.check_lattice(lat)?;
    let grid = WealthGrid::new(lat, payoff, spec)?;
    let n = lat.steps();
    let q_up = lat.q_up();
    let mut slices: Vec<Vec<NodeSlice>> = vec![Vec::new(); n + 1];

    slices[n] = (0..=n)
        .into_par_iter()
        .map(|j| {
            let g = grid.grid(n, j);
            let y = payoff.buyer(n, j);
            let raw: Vec<f64> = g.iter().map(|&z| (y - z).max(0.0)).collect();
            let hull = hull_of(&g, &raw);
            NodeSlice { raw, hull }
        })
        .collect();

    let mut root_frontier = None;
    for k in (0..n).rev() {
        let next = &slices[k + 1];
        let (s_may, b_may) = (payoff.seller_can_stop(k), payoff.buyer_can_stop(k));
        let level: Vec<(NodeSlice, Option<Frontier>)> = (0..=k)
            .into_par_iter()
            .map(|j| {
                let frontier = build_frontier(&grid, next, k, j, q_up);
                let g = grid.grid(k, j);
                let (x, y) = (payoff.seller(k, j), payoff.buyer(k, j));
                let raw: Vec<f64> = g
                    .iter()
                    .map(|&z| {
                        stage(
                            s_may,
                            b_may,
                            (x - z).max(0.0),
                            (y - z).max(0.0),
                            frontier.value(z),
                        )
                    })
                    .collect();
                let hull = hull_of(&g, &raw);
                let keep = (k == 0).then_some(frontier);
                (NodeSlice { raw, hull }, keep)
            })
            .collect();
        let mut row = Vec::with_capacity(k + 1);
        for (slice, frontier) in level {
            if frontier.is_some() {
                root_frontier = frontier;
            }
            row.push(slice);
        }
        slices[k] = row;
    }

    Ok(ValueSurface {
        grid,
        slices,
        payoff: payoff.clone(),
        q_up,
        root_frontier: root_frontier.expect("lattice has at least one step"),
    })
}

/// Transition of a plan state to a state on the next level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub up: bool,
    /// Probability of this target given the stock move.
    pub weight: f64,
}

/// Wealth held at a lattice node, reached with probability `prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub node: usize,
    pub wealth: f64,
    pub prob: f64,
    pub next: Vec<Transition>,
}

/// Wealth targets `D_k` as a Markov chain of `(node, wealth)` states.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgePlan {
    levels: Vec<Vec<PlanState>>,
}

impl HedgePlan {
    pub fn new(levels: Vec<Vec<PlanState>>) -> Result<Self> {
        if levels.is_empty() || levels[0].len() != 1 {
            return Err(Error::MalformedPlan(
                "level 0 must hold exactly one state".into(),
            ));
        }
        let n = levels.len() - 1;
        for (k, states) in levels.iter().enumerate() {
            for (i, s) in states.iter().enumerate() {
                if s.node > k {
                    return Err(Error::MalformedPlan(format!(
                        "state {i} on level {k} sits on node {}",
                        s.node
                    )));
                }
                if k == n {
                    continue;
                }
                for up in [false, true] {
                    let mut total = 0.0;
                    let mut seen = false;
                    for t in s.next.iter().filter(|t| t.up == up) {
                        let target = levels[k + 1].get(t.state).ok_or_else(|| {
                            Error::MalformedPlan(format!("dangling transition from level {k}"))
                        })?;
                        if target.node != s.node + usize::from(up) {
                            return Err(Error::MalformedPlan(format!(
                                "transition from node {} lands on node {}",
                                s.node, target.node
                            )));
                        }
                        total += t.weight;
                        seen = true;
                    }
                    if !seen || (total - 1.0).abs() > 1e-9 {
                        return Err(Error::MalformedPlan(format!(
                            "weights of state {i} on level {k} sum to {total}"
                        )));
                    }
                }
            }
        }
        Ok(Self { levels })
    }

    /// One state per node with deterministic wealth `wealth(k, j)`.
    pub fn from_node_wealth(lat: &Lattice, wealth: &NodeTable<f64>) -> Result<Self> {
        let n = lat.steps();
        if wealth.steps() < n {
            return Err(Error::MissingWealth {
                level: wealth.steps() + 1,
            });
        }
        let levels = (0..=n)
            .map(|k| {
                let probs = lat.level_weights(k);
                (0..=k)
                    .map(|j| PlanState {
                        node: j,
                        wealth: *wealth.get(k, j),
                        prob: probs[j].0,
                        next: if k == n {
                            Vec::new()
                        } else {
                            vec![
                                Transition {
                                    state: j,
                                    up: false,
                                    weight: 1.0,
                                },
                                Transition {
                                    state: j + 1,
                                    up: true,
                                    weight: 1.0,
                                },
                            ]
                        },
                    })
                    .collect()
            })
            .collect();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[Vec<PlanState>] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &[PlanState] {
        &self.levels[k]
    }

    pub fn initial_wealth(&self) -> f64 {
        self.levels[0][0].wealth
    }

    pub fn state_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// `E_Q[D_{k+1} | state] - D_k` for every nonterminal state.
    pub fn q_drifts(&self, lat: &Lattice) -> Vec<Vec<f64>> {
        let q = lat.q_up();
        let n = self.levels.len() - 1;
        self.levels[..n]
            .iter()
            .enumerate()
            .map(|(k, states)| {
                states
                    .iter()
                    .map(|s| {
                        let mean: f64 = s
                            .next
                            .iter()
                            .map(|t| {
                                let qm = if t.up { q } else { 1.0 - q };
                                qm * t.weight * self.levels[k + 1][t.state].wealth
                            })
                            .sum();
                        mean - s.wealth
                    })
                    .collect()
            })
            .collect()
    }

    pub fn min_wealth(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .map(|s| s.wealth)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Output of [`solve_shortfall`].
#[derive(Debug, Clone)]
pub struct RiskSolution {
    pub risk: f64,
    pub plan: HedgePlan,
    pub seller_rule: StoppingRule,
    /// Budget multiplier λ of the transfer step at every plan state.
    pub multipliers: Vec<Vec<f64>>,
    pub surface: ValueSurface,
}

/// Minimal shortfall risk for initial capital `x` with the attaining hedge.
pub fn solve_shortfall(
    lat: &Lattice,
    payoff: &GamePayoff,
    x: f64,
    spec: GridSpec,
) -> Result<RiskSolution> {
    if !(x >= 0.0) {
        return Err(Error::NegativeCapital(x));
    }
    let surface = solve_surface(lat, payoff, spec)?;
    let risk = surface.risk_at(x);
    let (plan, seller_rule, multipliers) = extract_plan(&surface, x)?;
    Ok(RiskSolution {
        risk,
        plan,
        seller_rule,
        multipliers,
        surface,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum WealthKey {
    Grid(u32),
    Above(u64),
}

/// Forward pass from `D_0 = x` through the optimal transfers.
pub fn extract_plan(
    surface: &ValueSurface,
    x: f64,
) -> Result<(HedgePlan, StoppingRule, Vec<Vec<f64>>)> {
    if !(x >= 0.0) {
        return Err(Error::NegativeCapital(x));
    }
    let n = surface.steps();
    let grid = &surface.grid;
    let payoff = &surface.payoff;

    let mut levels: Vec<Vec<PlanState>> = vec![vec![PlanState {
        node: 0,
        wealth: x,
        prob: 1.0,
        next: Vec::new(),
    }]];
    let mut stops: Vec<Vec<bool>> = Vec::with_capacity(n + 1);
    let mut multipliers: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let mut frontiers: HashMap<usize, Frontier> = HashMap::new();
        let mut next: Vec<PlanState> = Vec::new();
        let mut index: HashMap<(usize, WealthKey), usize> = HashMap::new();
        let mut stop_row = Vec::with_capacity(levels[k].len());
        let mut lambda_row = Vec::with_capacity(levels[k].len());
        let children = [(false, 1.0 - P_UP), (true, P_UP)];

        for si in 0..levels[k].len() {
            let (j, w, prob) = {
                let s = &levels[k][si];
                (s.node, s.wealth, s.prob)
            };
            let frontier = frontiers.entry(j).or_insert_with(|| surface.frontier(k, j));
            let (value, cancel) = surface.stage_value(k, j, w, frontier);
            stop_row.push(payoff.seller_can_stop(k) && value == cancel);
            lambda_row.push(frontier.multiplier(w));

            let capacity = frontier.capacity();
            // rounding in the merged budget must not spawn distinct states
            let excess = w - capacity;
            let excess = if excess <= 1e-12 * w.max(1.0) {
                0.0
            } else {
                excess
            };
            let targets: Vec<Vec<(WealthKey, f64, f64)>> = if w < capacity {
                let pos = frontier.allocate(w, 2);
                children
                    .iter()
                    .zip(&pos)
                    .map(|(&(up, _), p)| {
                        let cj = j + usize::from(up);
                        let hull = &surface.slices[k + 1][cj].hull;
                        let a_idx = hull[p.edge] as usize;
                        let a = grid.point(k + 1, cj, a_idx);
                        if p.t <= 0.0 || p.edge + 1 >= hull.len() {
                            return vec![(WealthKey::Grid(a_idx as u32), a, 1.0)];
                        }
                        let b_idx = hull[p.edge + 1] as usize;
                        let b = grid.point(k + 1, cj, b_idx);
                        let theta = a + p.t * (b - a);
                        match randomize_to_envelope(theta, (a, b)) {
                            Ok(mix) => vec![
                                (WealthKey::Grid(a_idx as u32), a, mix.lower.1),
                                (WealthKey::Grid(b_idx as u32), b, mix.upper.1),
                            ],
                            Err(_) if theta >= b => {
                                vec![(WealthKey::Grid(b_idx as u32), b, 1.0)]
                            }
                            Err(_) => vec![(WealthKey::Grid(a_idx as u32), a, 1.0)],
                        }
                    })
                    .collect()
            } else {
                children
                    .iter()
                    .map(|&(up, _)| {
                        let cj = j + usize::from(up);
                        let top = grid.len(k + 1, cj) - 1;
                        let wc = grid.zmax(k + 1, cj) + excess;
                        let key = if excess == 0.0 {
                            WealthKey::Grid(top as u32)
                        } else {
                            WealthKey::Above(wc.to_bits())
                        };
                        vec![(key, wc, 1.0)]
                    })
                    .collect()
            };

            let mut transitions = Vec::new();
            for (&(up, pm), list) in children.iter().zip(targets) {
                let cj = j + usize::from(up);
                for (key, wealth, weight) in list {
                    if weight == 0.0 {
                        continue;
                    }
                    let idx = *index.entry((cj, key)).or_insert_with(|| {
                        next.push(PlanState {
                            node: cj,
                            wealth,
                            prob: 0.0,
                            next: Vec::new(),
                        });
                        next.len() - 1
                    });
                    next[idx].prob += prob * pm * weight;
                    transitions.push(Transition {
                        state: idx,
                        up,
                        weight,
                    });
                }
            }
            levels[k][si].next = transitions;
        }
        stops.push(stop_row);
        multipliers.push(lambda_row);
        levels.push(next);
    }
    stops.push(vec![true; levels[n].len()]);

    Ok((
        HedgePlan::new(levels)?,
        StoppingRule::new(stops),
        multipliers,
    ))
}

/// `sup_τ E_P[(H(σ, τ) - D_{σ∧τ})⁺]` for a fixed plan and cancellation rule,
/// by backward induction of the buyer's best response.
pub fn risk_of_plan(
    lat: &Lattice,
    payoff: &GamePayoff,
    plan: &HedgePlan,
    seller_rule: &StoppingRule,
) -> Result<f64> {
    payoff.check_lattice(lat)?;
    let n = lat.steps();
    if plan.levels.len() != n + 1 {
        return Err(Error::MissingWealth {
            level: plan.levels.len(),
        });
    }
    if seller_rule.levels() != n + 1 {
        return Err(Error::MalformedPlan(
            "stopping rule does not cover every level".into(),
        ));
    }
    for (k, states) in plan.levels.iter().enumerate() {
        if seller_rule.level(k).len() != states.len() {
            return Err(Error::MalformedPlan(format!(
                "stopping rule size mismatch on level {k}"
            )));
        }
        for s in states {
            if s.wealth < 0.0 || !s.wealth.is_finite() {
                return Err(Error::NegativeWealth {
                    level: k,
                    wealth: s.wealth,
                });
            }
        }
    }
    for (k, row) in plan.q_drifts(lat).iter().enumerate() {
        for (i, &drift) in row.iter().enumerate() {
            let scale = plan.levels[k][i].wealth.max(1.0);
            if drift > 1e-9 * scale {
                return Err(Error::NotSupermartingale {
                    level: k,
                    excess: drift,
                });
            }
        }
    }

    let mut values: Vec<f64> = plan.levels[n]
        .iter()
        .map(|s| (payoff.buyer(n, s.node) - s.wealth).max(0.0))
        .collect();
    for k in (0..n).rev() {
        let b_may = payoff.buyer_can_stop(k);
        let s_may = payoff.seller_can_stop(k);
        let mut row = Vec::with_capacity(plan.levels[k].len());
        for (i, s) in plan.levels[k].iter().enumerate() {
            let cancel = (payoff.seller(k, s.node) - s.wealth).max(0.0);
            let exercise = (payoff.buyer(k, s.node) - s.wealth).max(0.0);
            let v = if seller_rule.stops_at(k, i) {
                if !s_may {
                    return Err(Error::MalformedPlan(format!(
                        "cancellation on level {k} is not allowed"
                    )));
                }
                if b_may {
                    cancel.max(exercise)
                } else {
                    cancel
                }
            } else {
                let cont: f64 = s
                    .next
                    .iter()
                    .map(|t| {
                        let pm = if t.up { P_UP } else { 1.0 - P_UP };
                        pm * t.weight * values[t.state]
                    })
                    .sum();
                if b_may {
                    exercise.max(cont)
                } else {
                    cont
                }
            };
            row.push(v);
        }
        values = row;
    }
    Ok(values[0])
}
