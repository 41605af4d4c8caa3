//! Single-step budgeted transfer of wealth to the child states.
//!
//! Given children with market weights `p_i`, martingale weights `q_i` and
//! nonincreasing loss functions `loss_i` on `[0, zmax_i]`, the transfer
//! problem is
//!
//! ```text
//! minimize   Σ p_i · loss_i^c(θ_i)
//! subject to Σ q_i · θ_i ≤ budget,   0 ≤ θ_i ≤ zmax_i,
//! ```
//!
//! where `loss_i^c` is the convex envelope. Replacing the loss by its envelope
//! is exact once the child wealth may be randomized between envelope knots.
//!
//! [`transfer_optimize`] solves a single budget by bisection on the budget
//! multiplier. [`Frontier`] solves every budget at once: in the variables
//! `w_i = q_i θ_i` the optimal value is the infimal convolution of the scaled
//! losses, obtained by merging their linear pieces in order of slope.

use crate::envelope::{convex_envelope, lower_hull, PiecewiseLinearFn};
use crate::error::{Error, Result};

/// One child of the transfer problem.
#[derive(Debug, Clone)]
pub struct TransferChild {
    p: f64,
    q: f64,
    loss: Option<PiecewiseLinearFn>,
    degenerate_value: f64,
}

impl TransferChild {
    /// `loss` must be defined on `[0, zmax]` with `zmax > 0`.
    pub fn new(p: f64, q: f64, loss: PiecewiseLinearFn) -> Result<Self> {
        if loss.domain().0 != 0.0 {
            return Err(Error::InvalidTransfer(format!(
                "loss domain must start at 0, starts at {}",
                loss.domain().0
            )));
        }
        Ok(Self {
            p,
            q,
            loss: Some(loss),
            degenerate_value: 0.0,
        })
    }

    /// Child whose only admissible wealth is 0 (`zmax = 0`).
    pub fn degenerate(p: f64, q: f64, value: f64) -> Self {
        Self {
            p,
            q,
            loss: None,
            degenerate_value: value,
        }
    }

    pub fn zmax(&self) -> f64 {
        self.loss.as_ref().map_or(0.0, |f| f.domain().1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSolution {
    pub value: f64,
    pub allocation: Vec<f64>,
    /// Budget multiplier λ ≥ 0.
    pub multiplier: f64,
}

fn validate(children: &[TransferChild], budget: f64) -> Result<()> {
    if children.is_empty() {
        return Err(Error::InvalidTransfer("no children".into()));
    }
    if !(budget >= 0.0) {
        return Err(Error::InvalidTransfer(format!(
            "budget must be nonnegative, got {budget}"
        )));
    }
    let (mut sp, mut sq) = (0.0, 0.0);
    for c in children {
        if !(c.p > 0.0 && c.q > 0.0) {
            return Err(Error::InvalidTransfer(format!(
                "weights must be positive, got p = {}, q = {}",
                c.p, c.q
            )));
        }
        sp += c.p;
        sq += c.q;
    }
    if (sp - 1.0).abs() > 1e-9 || (sq - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTransfer(format!(
            "weights must sum to one, got Σp = {sp}, Σq = {sq}"
        )));
    }
    Ok(())
}

/// Convex envelope of one child with its Lagrangian scale `q / p`.
struct Convexified {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    ratio: f64,
}

impl Convexified {
    fn new(child: &TransferChild) -> Self {
        let ratio = child.q / child.p;
        match &child.loss {
            Some(f) => {
                let env = convex_envelope(f);
                let slopes = env.slopes();
                Self {
                    knots: env.knots().to_vec(),
                    values: env.values().to_vec(),
                    slopes,
                    ratio,
                }
            }
            None => Self {
                knots: vec![0.0],
                values: vec![child.degenerate_value],
                slopes: Vec::new(),
                ratio,
            },
        }
    }

    /// Smallest minimizer of `env(θ) + λ·ratio·θ`; always an envelope knot.
    fn argmin(&self, lambda: f64) -> usize {
        let shift = lambda * self.ratio;
        self.slopes.partition_point(|&s| s + shift < 0.0)
    }

    fn eval(&self, theta: f64) -> f64 {
        crate::envelope::interpolate(&self.knots, &self.values, theta)
    }

    fn steepest(&self) -> f64 {
        self.slopes.iter().fold(0.0f64, |m, s| m.max(-s))
    }
}

/// Solves the transfer problem for one budget by bisection on λ.
///
/// Bisection stops once the multiplier bracket is below `1e-12` relative;
/// the remaining budget is then spread over the children whose optimal knot
/// changes inside the bracket, so the budget residual is below `1e-10`.
pub fn transfer_optimize(children: &[TransferChild], budget: f64) -> Result<TransferSolution> {
    validate(children, budget)?;
    let envs: Vec<Convexified> = children.iter().map(Convexified::new).collect();
    let spend = |lambda: f64| -> (Vec<usize>, f64) {
        let idx: Vec<usize> = envs.iter().map(|e| e.argmin(lambda)).collect();
        let used = idx
            .iter()
            .zip(&envs)
            .zip(children)
            .map(|((&i, e), c)| c.q * e.knots[i])
            .sum();
        (idx, used)
    };
    let finish = |alloc: Vec<f64>, multiplier: f64| {
        let value = alloc
            .iter()
            .zip(&envs)
            .zip(children)
            .map(|((&t, e), c)| c.p * e.eval(t))
            .sum();
        TransferSolution {
            value,
            allocation: alloc,
            multiplier,
        }
    };

    let (idx0, used0) = spend(0.0);
    if used0 <= budget {
        let alloc = idx0.iter().zip(&envs).map(|(&i, e)| e.knots[i]).collect();
        return Ok(finish(alloc, 0.0));
    }

    let mut hi = envs
        .iter()
        .map(|e| e.steepest() / e.ratio)
        .fold(0.0f64, f64::max)
        * 2.0
        + 1.0;
    let mut lo = 0.0;
    debug_assert!(spend(hi).1 <= budget);
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if spend(mid).1 > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (idx_hi, used_hi) = spend(hi);
    let (idx_lo, _) = spend(lo);
    let mut alloc: Vec<f64> = idx_hi.iter().zip(&envs).map(|(&i, e)| e.knots[i]).collect();
    let mut left = budget - used_hi;
    for (c, child) in children.iter().enumerate() {
        if left <= 0.0 {
            break;
        }
        let target = envs[c].knots[idx_lo[c]];
        if target > alloc[c] {
            let step = (left / child.q).min(target - alloc[c]);
            alloc[c] += step;
            left -= step * child.q;
        }
    }
    Ok(finish(alloc, hi))
}

/// Position on one child's envelope: hull edge `edge` at fraction `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EdgePosition {
    pub edge: usize,
    pub t: f64,
}

/// Envelope of one child as hull vertices of a sampled slice.
pub(crate) struct ChildHull<'a> {
    pub p: f64,
    pub q: f64,
    pub grid: &'a [f64],
    pub values: &'a [f64],
    pub hull: &'a [u32],
}

/// Exact optimal transfer value for every budget in `[0, Σ q_i zmax_i]`.
#[derive(Debug, Clone)]
pub(crate) struct Frontier {
    /// Cumulative budget at the start of each merged piece (len = pieces + 1).
    cum_w: Vec<f64>,
    /// Value at the start of each merged piece (len = pieces + 1).
    cum_v: Vec<f64>,
    slope: Vec<f64>,
    owner: Vec<u32>,
    /// `used[c][s]`: number of child `c` edges fully used before piece `s`.
    used: Vec<Vec<u32>>,
}

impl Frontier {
    pub fn build(children: &[ChildHull<'_>]) -> Self {
        struct Piece {
            dw: f64,
            dv: f64,
            slope: f64,
        }
        let pieces: Vec<Vec<Piece>> = children
            .iter()
            .map(|c| {
                c.hull
                    .windows(2)
                    .map(|e| {
                        let (a, b) = (e[0] as usize, e[1] as usize);
                        let dw = c.q * (c.grid[b] - c.grid[a]);
                        let dv = c.p * (c.values[b] - c.values[a]);
                        Piece {
                            dw,
                            dv,
                            slope: dv / dw,
                        }
                    })
                    .collect()
            })
            .collect();
        let total: usize = pieces.iter().map(Vec::len).sum();

        let start: f64 = children
            .iter()
            .map(|c| c.p * c.values[c.hull[0] as usize])
            .sum();
        let mut cum_w = Vec::with_capacity(total + 1);
        let mut cum_v = Vec::with_capacity(total + 1);
        let mut slope = Vec::with_capacity(total);
        let mut owner = Vec::with_capacity(total);
        let mut used: Vec<Vec<u32>> = vec![Vec::with_capacity(total + 1); children.len()];
        let mut head = vec![0usize; children.len()];
        cum_w.push(0.0);
        cum_v.push(start);
        for u in used.iter_mut() {
            u.push(0);
        }
        for _ in 0..total {
            // k-way merge by slope; each child keeps its own edge order
            let mut best: Option<usize> = None;
            for c in 0..children.len() {
                if head[c] < pieces[c].len() {
                    let s = pieces[c][head[c]].slope;
                    if best.is_none_or(|b| s < pieces[b][head[b]].slope) {
                        best = Some(c);
                    }
                }
            }
            let c = best.expect("pieces remain");
            let piece = &pieces[c][head[c]];
            head[c] += 1;
            let w = cum_w[cum_w.len() - 1] + piece.dw;
            let v = cum_v[cum_v.len() - 1] + piece.dv;
            cum_w.push(w);
            cum_v.push(v);
            slope.push(piece.slope);
            owner.push(c as u32);
            for (i, u) in used.iter_mut().enumerate() {
                u.push(head[i] as u32);
            }
        }
        Self {
            cum_w,
            cum_v,
            slope,
            owner,
            used,
        }
    }

    /// Largest budget that can be spent, `Σ q_i zmax_i`.
    pub fn capacity(&self) -> f64 {
        self.cum_w[self.cum_w.len() - 1]
    }

    fn piece(&self, w: f64) -> Option<usize> {
        if self.slope.is_empty() || w >= self.capacity() {
            return None;
        }
        // last piece whose start is <= w
        Some(
            self.cum_w
                .partition_point(|&c| c <= w)
                .saturating_sub(1)
                .min(self.slope.len() - 1),
        )
    }

    pub fn value(&self, w: f64) -> f64 {
        match self.piece(w) {
            None => {
                if w >= self.capacity() {
                    self.cum_v[self.cum_v.len() - 1]
                } else {
                    self.cum_v[0]
                }
            }
            Some(s) => self.cum_v[s] + self.slope[s] * (w - self.cum_w[s]),
        }
    }

    /// Budget multiplier at `w`: minus the slope of the active piece.
    pub fn multiplier(&self, w: f64) -> f64 {
        self.piece(w).map_or(0.0, |s| -self.slope[s])
    }

    /// Budget-tight allocation of `w ≤ capacity()` as positions on each
    /// child's envelope.
    pub fn allocate(&self, w: f64, children: usize) -> Vec<EdgePosition> {
        match self.piece(w) {
            None => {
                let last = self.used.iter().map(|u| u[u.len() - 1] as usize);
                if w >= self.capacity() {
                    last.map(|e| EdgePosition { edge: e, t: 0.0 }).collect()
                } else {
                    vec![EdgePosition { edge: 0, t: 0.0 }; children]
                }
            }
            Some(s) => {
                let len = self.cum_w[s + 1] - self.cum_w[s];
                let t = ((w - self.cum_w[s]) / len).clamp(0.0, 1.0);
                let owner = self.owner[s] as usize;
                (0..children)
                    .map(|c| EdgePosition {
                        edge: self.used[c][s] as usize,
                        t: if c == owner { t } else { 0.0 },
                    })
                    .collect()
            }
        }
    }
}

/// Convenience wrapper solving the convexified problem through the merged
/// frontier; used to cross-check [`transfer_optimize`].
pub fn transfer_frontier(children: &[TransferChild], budget: f64) -> Result<TransferSolution> {
    validate(children, budget)?;
    let sampled: Vec<(Vec<f64>, Vec<f64>)> = children
        .iter()
        .map(|c| match &c.loss {
            Some(f) => (f.knots().to_vec(), f.values().to_vec()),
            None => (vec![0.0], vec![c.degenerate_value]),
        })
        .collect();
    let hulls: Vec<Vec<u32>> = sampled
        .iter()
        .map(|(k, v)| lower_hull(k, v).into_iter().map(|i| i as u32).collect())
        .collect();
    let views: Vec<ChildHull<'_>> = children
        .iter()
        .zip(&sampled)
        .zip(&hulls)
        .map(|((c, (k, v)), h)| ChildHull {
            p: c.p,
            q: c.q,
            grid: k,
            values: v,
            hull: h,
        })
        .collect();
    let frontier = Frontier::build(&views);
    let w = budget.min(frontier.capacity());
    let positions = frontier.allocate(w, children.len());
    let allocation = positions
        .iter()
        .zip(&views)
        .map(|(pos, c)| {
            let a = c.grid[c.hull[pos.edge] as usize];
            if pos.t > 0.0 {
                let b = c.grid[c.hull[pos.edge + 1] as usize];
                a + pos.t * (b - a)
            } else {
                a
            }
        })
        .collect();
    Ok(TransferSolution {
        value: frontier.value(w),
        allocation,
        multiplier: frontier.multiplier(w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call_loss(c: f64, zmax: f64, points: usize) -> PiecewiseLinearFn {
        let knots: Vec<f64> = (0..points)
            .map(|i| zmax * i as f64 / (points - 1) as f64)
            .collect();
        PiecewiseLinearFn::sample(knots, |t| (c - t).max(0.0)).unwrap()
    }

    fn two_claims() -> Vec<TransferChild> {
        vec![
            TransferChild::new(0.5, 0.5, call_loss(1.0, 1.0, 3)).unwrap(),
            TransferChild::new(0.5, 0.5, call_loss(2.0, 2.0, 5)).unwrap(),
        ]
    }

    #[test]
    fn budget_one_leaves_half_a_unit() {
        for solve in [transfer_optimize, transfer_frontier] {
            let s = solve(&two_claims(), 1.0).unwrap();
            assert!((s.value - 0.5).abs() < 1e-10, "{}", s.value);
            let (t1, t2) = (s.allocation[0], s.allocation[1]);
            assert!((t1 + t2 - 2.0).abs() < 1e-9);
            assert!(t1 <= 1.0 + 1e-12 && t2 <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn large_budget_covers_everything() {
        for solve in [transfer_optimize, transfer_frontier] {
            for z in [1.5, 2.0, 10.0] {
                let s = solve(&two_claims(), z).unwrap();
                assert!(s.value.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_budget_forces_zero_allocation() {
        for solve in [transfer_optimize, transfer_frontier] {
            let s = solve(&two_claims(), 0.0).unwrap();
            assert!((s.value - 1.5).abs() < 1e-15);
            assert_eq!(s.allocation, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn lp_grid_brute_force() {
        // fine θ-grid search over the budget line
        let children = two_claims();
        for z in [0.1, 0.37, 0.8, 1.2] {
            let mut best = f64::INFINITY;
            let m = 2000;
            for a in 0..=m {
                let t1 = a as f64 / m as f64;
                let t2 = ((z - 0.5 * t1) / 0.5).clamp(0.0, 2.0);
                if 0.5 * t1 > z + 1e-12 {
                    continue;
                }
                let v = 0.5 * (1.0 - t1).max(0.0) + 0.5 * (2.0 - t2).max(0.0);
                best = best.min(v);
            }
            let s = transfer_optimize(&children, z).unwrap();
            assert!(
                (s.value - best).abs() < 1e-3,
                "z = {z}: {} vs {best}",
                s.value
            );
            assert!(s.value <= best + 1e-12);
        }
    }

    #[test]
    fn nonconvex_loss_uses_envelope() {
        // tent-shaped dip: loss 1 at 0, 1 at 1, 0 at 2 -> envelope is the chord
        let loss = PiecewiseLinearFn::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 0.0]).unwrap();
        let children = vec![
            TransferChild::new(0.5, 0.4, loss.clone()).unwrap(),
            TransferChild::new(0.5, 0.6, loss).unwrap(),
        ];
        let s = transfer_optimize(&children, 0.4).unwrap();
        // cheapest per unit of Q-budget is child 0 (q/p = 0.8): θ_0 = 1 at value 0.5
        assert!((s.value - (0.5 * 0.5 + 0.5)).abs() < 1e-10, "{}", s.value);
        let f = transfer_frontier(&children, 0.4).unwrap();
        assert!((f.value - s.value).abs() < 1e-12);
    }

    #[test]
    fn degenerate_child_gets_nothing() {
        let children = vec![
            TransferChild::degenerate(0.5, 0.5, 0.0),
            TransferChild::new(0.5, 0.5, call_loss(1.0, 1.0, 11)).unwrap(),
        ];
        for solve in [transfer_optimize, transfer_frontier] {
            let s = solve(&children, 0.25).unwrap();
            assert_eq!(s.allocation[0], 0.0);
            assert!((s.allocation[1] - 0.5).abs() < 1e-9);
            assert!((s.value - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_problems() {
        assert!(transfer_optimize(&two_claims(), -1.0).is_err());
        let bad = vec![TransferChild::new(0.3, 0.5, call_loss(1.0, 1.0, 3)).unwrap()];
        assert!(transfer_optimize(&bad, 1.0).is_err());
        let shifted = PiecewiseLinearFn::new(vec![0.5, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(TransferChild::new(0.5, 0.5, shifted).is_err());
    }

    #[test]
    fn multiplier_matches_active_slope() {
        let s = transfer_optimize(&two_claims(), 1.0).unwrap();
        let f = transfer_frontier(&two_claims(), 1.0).unwrap();
        // one unit of Q-budget buys 1/q units of θ, each worth p: λ = p/q = 1
        assert!((s.multiplier - 1.0).abs() < 1e-9, "{}", s.multiplier);
        assert!((f.multiplier - 1.0).abs() < 1e-12, "{}", f.multiplier);
    }
}
