//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line
//! with the measured values, then asserts.

use std::time::{Duration, Instant};

use gameshort_cli::config::ExperimentConfig;
use gameshort_cli::experiments::{
    envelope_cases, nu_checks, oracle_instances, run_line_check, run_nonattainment,
    strong_duality_checks, structure_stats,
};
use gameshort_cli::report::{Check, Report};
use gameshort_core::counterexample::counterexample_cancel;
use gameshort_core::duality::{compute_f, compute_nu, default_lambda_grid, DualCurve};
use gameshort_core::{Lattice, ModelParams};

/// Wealth grid for the n = 200 risk criteria; 201 points leave a
/// discretization error of the same size as the tolerances.
const FINE_GRID: usize = 3201;
const SEED: u64 = 20_240_601;

fn params() -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
}

fn config(dir: &tempfile::TempDir, steps: &[usize], grid: usize) -> ExperimentConfig {
    ExperimentConfig {
        steps: steps.to_vec(),
        wealth_grid_points: grid,
        seed: SEED,
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn verdict(
    criterion: u32,
    title: &str,
    checks: &[Check],
    elapsed: Duration,
    limit: Option<Duration>,
) {
    let mut failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:.6e} (want {})", c.name, c.measured, c.threshold))
        .collect();
    if let Some(limit) = limit {
        if elapsed > limit {
            failed.push(format!("runtime {elapsed:.1?} over {limit:?}"));
        }
    }
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{}={:.4e}", c.name, c.measured))
        .collect();
    println!(
        "criterion {criterion}: {} {title} [{:.1?}] {}",
        if failed.is_empty() { "PASS" } else { "FAIL" },
        elapsed,
        detail.join(" ")
    );
    assert!(
        failed.is_empty(),
        "criterion {criterion} failed: {}",
        failed.join("; ")
    );
}

fn checks_of(report: &Report) -> Vec<Check> {
    report.checks.clone()
}

#[test]
fn criterion_1_dual_flatness() {
    let start = Instant::now();
    let lat = Lattice::build(params(), 200).unwrap();
    let cancel = counterexample_cancel(&lat).unwrap();
    let checks: Vec<Check> = [2.0, 3.0, 10.0]
        .iter()
        .map(|&l| {
            let (f, _) = compute_f(&lat, &cancel, l).unwrap();
            Check::at_most(format!("abs_F_minus_1_lambda{l}"), (f - 1.0).abs(), 0.01)
        })
        .collect();
    verdict(
        1,
        "F_n(λ) = 1 for λ ≥ 2",
        &checks,
        start.elapsed(),
        Some(Duration::from_secs(10)),
    );
}

#[test]
fn criterion_2_nu_triangulation() {
    let start = Instant::now();
    let p = params();
    let nu = compute_nu(&p).unwrap();
    let mut checks = vec![Check::at_most(
        "closed_form_vs_0.0582",
        (nu - 0.0582).abs(),
        5e-5,
    )];
    let (more, _) = nu_checks(&p, 500, 1_000_000, SEED).unwrap();
    checks.extend(more);
    verdict(
        2,
        "ν closed form, Monte Carlo, lattice",
        &checks,
        start.elapsed(),
        None,
    );
}

#[test]
fn criterion_3_risk_line() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = run_line_check(&config(&dir, &[25, 50, 100, 200], FINE_GRID)).unwrap();
    verdict(
        3,
        "R_n(x) - (1 - 2x) in [0, 0.02], nonincreasing in n",
        &checks_of(&report),
        start.elapsed(),
        Some(Duration::from_secs(120)),
    );
}

#[test]
fn criterion_4_strong_duality() {
    let start = Instant::now();
    let lat = Lattice::build(params(), 200).unwrap();
    let cancel = counterexample_cancel(&lat).unwrap();
    let curve = DualCurve::compute(&lat, &cancel, &default_lambda_grid()).unwrap();
    let (checks, _) =
        strong_duality_checks(&lat, &curve, &[1.2, 1.4, 1.6, 1.8, 1.95], FINE_GRID).unwrap();
    assert_eq!(checks.len(), 5);
    verdict(
        4,
        "R_n(F') = F - λF' at 5 multipliers",
        &checks,
        start.elapsed(),
        None,
    );
}

#[test]
fn criterion_5_nonattainment() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = run_nonattainment(&config(&dir, &[200], FINE_GRID)).unwrap();
    verdict(
        5,
        "class excesses at x = ν/2",
        &checks_of(&report),
        start.elapsed(),
        None,
    );
}

#[test]
fn criterion_6_oracle_equivalence() {
    let start = Instant::now();
    let o = oracle_instances(200, SEED).unwrap();
    let checks = vec![
        Check::at_most("shortfall_vs_exhaustive", o.shortfall_vs_brute, 1e-6),
        Check::at_most("inf_sup_minus_sup_inf", o.saddle_gap, 1e-12),
        Check::at_most("saddle_vs_induction", o.saddle_vs_dp, 1e-12),
    ];
    verdict(
        6,
        "DP against exhaustive search, 200 instances",
        &checks,
        start.elapsed(),
        None,
    );
}

#[test]
fn criterion_7_envelope_laws() {
    let start = Instant::now();
    let e = envelope_cases(1000, SEED).unwrap();
    assert!(e.gaps_tested > 100, "only {} gap intervals", e.gaps_tested);
    let checks = vec![
        Check::at_most("above_function", e.above_function, 1e-12),
        Check::at_most("slope_decrease", e.slope_decrease, 1e-12),
        Check::at_most("idempotence", e.idempotence, 1e-12),
        Check::at_most("chord_mismatch", e.chord_mismatch, 1e-12),
        Check::at_most("mixture_mean", e.mean_error, 1e-12),
        Check::at_most("mixture_attains_envelope", e.attainment_error, 1e-12),
    ];
    verdict(
        7,
        "envelope laws, 1000 functions",
        &checks,
        start.elapsed(),
        None,
    );
}

#[test]
fn criterion_8_structural_invariants() {
    let start = Instant::now();
    let p = params();
    let nu = compute_nu(&p).unwrap();
    let s = structure_stats(&p, 200, 0.5 * nu, 201).unwrap();
    let checks = vec![
        Check::at_most("slice_convex_nonincreasing", s.slice_shape, 1e-12),
        Check::at_most("slice_zero_at_zmax", s.slice_top, 1e-12),
        Check::at_most("plan_q_drift", s.max_drift, 1e-9),
        Check::at_least("plan_min_wealth", s.min_wealth, 0.0),
        Check::at_most("root_increase", s.root_increase_cancel, 1e-12),
        Check::at_most("root_concavity", s.root_concavity_cancel, 1e-12),
        Check::at_most("root_increase_no_cancel_at_0", s.root_increase, 1e-12),
        Check::at_most("root_concavity_no_cancel_at_0", s.root_concavity, 1e-12),
    ];
    verdict(
        8,
        "surface shape, hedge martingale, root shape",
        &checks,
        start.elapsed(),
        None,
    );
}
