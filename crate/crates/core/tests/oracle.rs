use gameshort_core::brute::{
    best_response_brute, dynkin_saddle, envelope_by_chords, optimal_stop_brute, shortfall_brute,
    GameKind, HistoryTree,
};
use gameshort_core::dynkin::{game_price_q, optimal_stop, shortfall_game_value};
use gameshort_core::shortfall::{risk_of_plan, solve_shortfall, solve_surface, WealthGrid};
use gameshort_core::transfer::{transfer_frontier, transfer_optimize};
use gameshort_core::{
    GamePayoff, GridSpec, Lattice, Measure, ModelParams, NodeTable, PiecewiseLinearFn, Sense,
    TransferChild,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    lat: Lattice,
    payoff: GamePayoff,
    spec: GridSpec,
}

fn random_instance(rng: &mut ChaCha8Rng, max_steps: usize) -> Instance {
    let n = rng.random_range(1..=max_steps);
    // resample until the factors straddle 1
    let lat = loop {
        let params = ModelParams::new(
            rng.random_range(0.5..1.5),
            rng.random_range(0.1..0.8),
            rng.random_range(-0.6..0.6),
            rng.random_range(0.5..2.0),
        )
        .unwrap();
        if let Ok(lat) = Lattice::build(params, n) {
            break lat;
        }
    };
    let seller = NodeTable::from_fn(n, |_, _| rng.random_range(0.0..2.0));
    let buyer = seller.map(|_, _, &g| g * rng.random_range(0.0..1.0));
    let mut levels = vec![0, n];
    levels.extend((1..n).filter(|_| rng.random_bool(0.6)));
    let cancel: Vec<usize> = (0..=n).filter(|_| rng.random_bool(0.7)).collect();
    let payoff = GamePayoff::new(&levels, buyer, seller)
        .unwrap()
        .restrict_cancellation(&cancel)
        .with_cancel_at_zero(rng.random_bool(0.5));
    let spec = GridSpec {
        points: rng.random_range(2..=5),
    };
    Instance { lat, payoff, spec }
}

#[test]
fn shortfall_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nontrivial = 0;
    for case in 0..150 {
        let inst = random_instance(&mut rng, 2);
        let grid = WealthGrid::new(&inst.lat, &inst.payoff, inst.spec).unwrap();
        let top = grid.zmax(0, 0);
        for x in [0.0, 0.3 * top, 0.77 * top, top, 1.2 * top + 0.1] {
            let dp = solve_surface(&inst.lat, &inst.payoff, inst.spec)
                .unwrap()
                .risk_at(x);
            let brute = shortfall_brute(&inst.lat, &inst.payoff, &grid, x);
            assert!(
                (dp - brute).abs() <= 1e-6,
                "case {case}, x = {x}: dp {dp}, brute {brute}"
            );
            if x > 0.0 && dp > 1e-6 {
                nontrivial += 1;
            }
        }
    }
    assert!(
        nontrivial > 150,
        "only {nontrivial} cases with positive capital and risk"
    );
}

#[test]
fn dynkin_saddle_and_price() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let inst = random_instance(&mut rng, 3);
        let n = inst.lat.steps();
        let wealth = NodeTable::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let tree = HistoryTree::binomial(&inst.lat, &wealth).unwrap();
        let saddle = dynkin_saddle(&tree, &inst.payoff, GameKind::Shortfall);
        let dp = shortfall_game_value(&inst.lat, &inst.payoff, &wealth)
            .unwrap()
            .value;
        assert!(
            (saddle.inf_sup - saddle.sup_inf).abs() < 1e-12,
            "case {case}"
        );
        assert!((saddle.inf_sup - dp).abs() < 1e-12, "case {case}");

        let price = dynkin_saddle(&tree, &inst.payoff, GameKind::Price);
        assert!((price.inf_sup - price.sup_inf).abs() < 1e-12);
        let dp_price = game_price_q(&inst.lat, &inst.payoff).unwrap();
        assert!((price.inf_sup - dp_price).abs() < 1e-12, "case {case}");
    }
}

#[test]
fn optimal_stopping_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, 3);
        let n = inst.lat.steps();
        let reward = NodeTable::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        for (measure, use_q) in [(Measure::Market, false), (Measure::Martingale, true)] {
            for (sense, minimize) in [(Sense::Minimize, true), (Sense::Maximize, false)] {
                for allow in [false, true] {
                    let dp = optimal_stop(&inst.lat, &reward, allow, measure, sense).value;
                    let brute =
                        optimal_stop_brute(&inst.lat, &reward, allow, use_q, minimize).unwrap();
                    assert!((dp - brute).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn extracted_plan_is_optimal_on_its_history_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..80 {
        let inst = random_instance(&mut rng, 2);
        let grid = WealthGrid::new(&inst.lat, &inst.payoff, inst.spec).unwrap();
        let x = rng.random_range(0.0..1.1) * grid.zmax(0, 0);
        let sol = solve_shortfall(&inst.lat, &inst.payoff, x, inst.spec).unwrap();
        let tree = HistoryTree::from_plan(&inst.lat, &sol.plan);
        let saddle = dynkin_saddle(&tree, &inst.payoff, GameKind::Shortfall);
        assert!(
            (saddle.inf_sup - sol.risk).abs() < 1e-9,
            "case {case}: {} vs {}",
            saddle.inf_sup,
            sol.risk
        );

        // the solver's own cancellation rule, mapped onto the leaves
        let sigma: Vec<usize> = tree
            .leaves()
            .iter()
            .map(|&leaf| first_stop(&tree, &sol, leaf))
            .collect();
        let brute = best_response_brute(&tree, &inst.payoff, &sigma);
        let r = risk_of_plan(&inst.lat, &inst.payoff, &sol.plan, &sol.seller_rule).unwrap();
        assert!((brute - r).abs() < 1e-12, "case {case}");
        assert!((r - sol.risk).abs() < 1e-9, "case {case}");
    }
}

/// Walks from the root to `leaf` and returns the first node where the plan's
/// rule cancels (or the leaf itself).
fn first_stop(tree: &HistoryTree, sol: &gameshort_core::RiskSolution, leaf: usize) -> usize {
    let mut path = vec![leaf];
    while path[path.len() - 1] != 0 {
        let cur = path[path.len() - 1];
        let parent = tree
            .nodes
            .iter()
            .position(|n| n.children.contains(&cur))
            .unwrap();
        path.push(parent);
    }
    path.reverse();
    // recover plan state indices along the path by matching node and wealth
    let levels = sol.plan.levels();
    for &id in &path {
        let h = &tree.nodes[id];
        let si = levels[h.level]
            .iter()
            .position(|s| s.node == h.node && s.wealth == h.wealth)
            .unwrap();
        if sol.seller_rule.stops_at(h.level, si) {
            return id;
        }
    }
    leaf
}

#[test]
fn transfer_routes_agree_with_chord_envelopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        let p = rng.random_range(0.1..0.9);
        let q = rng.random_range(0.1..0.9);
        let children: Vec<TransferChild> = [(p, q), (1.0 - p, 1.0 - q)]
            .iter()
            .map(|&(pi, qi)| {
                let m = rng.random_range(2..8);
                let top = rng.random_range(0.2..2.0);
                let knots: Vec<f64> = (0..m).map(|i| top * i as f64 / (m - 1) as f64).collect();
                let mut v: f64 = rng.random_range(0.5..2.0);
                let values: Vec<f64> = (0..m)
                    .map(|_| {
                        v = (v - rng.random_range(0.0..0.6)).max(0.0);
                        v
                    })
                    .collect();
                TransferChild::new(pi, qi, PiecewiseLinearFn::new(knots, values).unwrap()).unwrap()
            })
            .collect();
        let cap: f64 = children.iter().map(|c| c.zmax()).fold(0.0, f64::max);
        for frac in [0.0, 0.1, 0.4, 0.8, 1.5] {
            let z = frac * cap;
            let a = transfer_optimize(&children, z).unwrap();
            let b = transfer_frontier(&children, z).unwrap();
            assert!(
                (a.value - b.value).abs() < 1e-9,
                "{} vs {}",
                a.value,
                b.value
            );
            let used: f64 = a
                .allocation
                .iter()
                .zip(&children)
                .zip([q, 1.0 - q])
                .map(|((t, _), qi)| qi * t)
                .sum();
            assert!(used <= z + 1e-10);
        }
    }
}

#[test]
fn chord_oracle_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let m = rng.random_range(2..12);
        let mut knots: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let values: Vec<f64> = knots.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = PiecewiseLinearFn::new(knots.clone(), values.clone()).unwrap();
        let env = gameshort_core::envelope::convex_envelope(&f);
        let chords = envelope_by_chords(&knots, &values);
        for (x, c) in knots.iter().zip(chords) {
            assert!((env.eval(*x).unwrap() - c).abs() < 1e-12);
        }
    }
}
