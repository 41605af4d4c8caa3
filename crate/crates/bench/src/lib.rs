//! Fixtures shared by the benchmarks.

use gameshort_core::counterexample::counterexample_payoff;
use gameshort_core::{GamePayoff, Lattice, ModelParams, PiecewiseLinearFn, TransferChild};

/// Counterexample lattice and payoff with `ϑ = κ = 1` on `n` steps.
pub fn counterexample(n: usize) -> (Lattice, GamePayoff) {
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0).expect("valid parameters");
    let lat = Lattice::build(params, n).expect("nondegenerate lattice");
    let payoff = counterexample_payoff(&lat).expect("unit horizon");
    (lat, payoff)
}

/// Deterministic nonconvex, nonincreasing loss on `points` knots of `[0, top]`.
pub fn sawtooth(points: usize, top: f64, phase: f64) -> PiecewiseLinearFn {
    let knots: Vec<f64> = (0..points)
        .map(|i| top * i as f64 / (points - 1) as f64)
        .collect();
    let values = knots
        .iter()
        .map(|&z| {
            let t = 1.0 - z / top;
            t * t * (1.0 + 0.3 * (17.0 * z + phase).sin().abs())
        })
        .collect();
    PiecewiseLinearFn::new(knots, values).expect("increasing knots")
}

/// Two children of a binomial step, each with a `points`-knot loss.
pub fn transfer_children(points: usize) -> Vec<TransferChild> {
    vec![
        TransferChild::new(0.5, 0.62, sawtooth(points, 1.4, 0.0)).expect("valid child"),
        TransferChild::new(0.5, 0.38, sawtooth(points, 0.7, 1.3)).expect("valid child"),
    ]
}
