//! The experiment runners. Each writes deterministic CSV files into the
//! output directory and returns the checks it evaluated.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gameshort_core::brute::{
    dynkin_saddle, envelope_by_chords, shortfall_brute, GameKind, HistoryTree,
};
use gameshort_core::counterexample::{
    class_risks, counterexample_cancel, counterexample_payoff, maturity_class,
    maturity_static_risk, payoff_modulus,
};
use gameshort_core::duality::{
    compute_f, compute_nu, default_lambda_grid, left_derivative_f, lower_bound_r, nu_lattice,
    nu_monte_carlo, DualCurve,
};
use gameshort_core::dynkin::{game_price_q, shortfall_game_value};
use gameshort_core::envelope::{convex_envelope, gap_intervals, randomize_to_envelope};
use gameshort_core::export::fmt_sig;
use gameshort_core::shortfall::{solve_shortfall, solve_surface, WealthGrid};
use gameshort_core::{GamePayoff, GridSpec, Lattice, ModelParams, NodeTable, PiecewiseLinearFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, PayoffKind};
use crate::plot::{line_plot, Series};
use crate::report::{Check, Report};

/// Tolerance for comparisons that hold exactly in real arithmetic.
const ROUNDING: f64 = 1e-12;

pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut report = match experiment {
        Experiment::LineCheck => run_line_check(cfg)?,
        Experiment::DualCurve => run_dual_curve(cfg)?,
        Experiment::Convergence => run_convergence(cfg)?,
        Experiment::Nonattainment => run_nonattainment(cfg)?,
        Experiment::OracleSuite => run_oracle_suite(cfg)?,
        Experiment::Price => run_price(cfg)?,
    };
    report.write_summary(&cfg.output_dir)?;
    Ok(report)
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    gameshort_core::export::write_rows(&mut buf, header, rows)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Short label for a number inside a check name.
fn tag(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn sorted_steps(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    steps
}

fn spec(cfg: &ExperimentConfig) -> GridSpec {
    GridSpec {
        points: cfg.wealth_grid_points,
    }
}

fn lambdas(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.lambdas.is_empty() {
        default_lambda_grid()
    } else {
        let mut l = cfg.lambdas.clone();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }
}

/// Capital levels for the risk-line experiments; defaults `0, ν/2, 0.9ν`.
fn line_xs(cfg: &ExperimentConfig, nu: f64, allow_zero: bool) -> Result<Vec<f64>> {
    let xs = if cfg.x_values.is_empty() {
        if allow_zero {
            vec![0.0, 0.5 * nu, 0.9 * nu]
        } else {
            vec![0.5 * nu]
        }
    } else {
        cfg.x_values.clone()
    };
    for &x in &xs {
        let inside = x < nu && (x > 0.0 || (allow_zero && x == 0.0));
        if !inside {
            bail!(
                "x = {x} is outside the capital range (0, ν) = (0, {nu}) in which the risk \
                 line 1 - 2x is claimed"
            );
        }
    }
    Ok(xs)
}

/// Risk line `R_n(x)` against `1 - 2x` for capital below ν.
pub fn run_line_check(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let nu = compute_nu(&params)?;
    let xs = line_xs(cfg, nu, true)?;
    let steps = sorted_steps(cfg);
    let grid_lambdas = lambdas(cfg);
    let mut report = Report::new("line_check", cfg.seed);
    let mut rows = Vec::new();
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); xs.len()];
    let mut plot_curve = Vec::new();

    for &n in &steps {
        let lat = Lattice::build(params, n)?;
        let payoff = counterexample_payoff(&lat)?;
        let surface = solve_surface(&lat, &payoff, spec(cfg))?;
        let cancel = counterexample_cancel(&lat)?;
        let curve = DualCurve::compute(&lat, &cancel, &grid_lambdas)?;
        let (f2, _) = compute_f(&lat, &cancel, 2.0)?;
        let mut slack = f64::INFINITY;
        for (i, &x) in xs.iter().enumerate() {
            let r = surface.risk_at(x);
            let line = 1.0 - 2.0 * x;
            gaps[i].push(r - line);
            for (&l, &f) in curve.lambdas.iter().zip(&curve.values) {
                slack = slack.min(r - (f - l * x));
            }
            slack = slack.min(r - (f2 - 2.0 * x));
            rows.push(vec![
                n as f64,
                x,
                r,
                line,
                r - line,
                f2 - 2.0 * x,
                lower_bound_r(&curve, x),
            ]);
        }
        report.push(Check::at_least(
            format!("weak_duality_slack_n{n}"),
            slack,
            -ROUNDING,
        ));
        if n == *steps.last().unwrap() {
            plot_curve = (0..=100)
                .map(|i| {
                    let x = nu * i as f64 / 100.0;
                    (x, surface.risk_at(x))
                })
                .collect();
        }
    }

    let n_max = *steps.last().unwrap();
    for (i, &x) in xs.iter().enumerate() {
        let last = gaps[i][gaps[i].len() - 1];
        report.push(Check::within(
            format!("gap_x{}_n{n_max}", tag(x)),
            last,
            0.0,
            0.02,
        ));
        if steps.len() > 1 {
            let rise = gaps[i]
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            report.push(Check::at_most(
                format!("gap_nonincreasing_x{}", tag(x)),
                rise,
                ROUNDING,
            ));
        }
    }

    let dir = &cfg.output_dir;
    report.files.push(write_csv(
        dir,
        "line_check.csv",
        &[
            "n",
            "x",
            "R_n",
            "line",
            "gap",
            "bound_lambda2",
            "bound_best",
        ],
        &rows,
    )?);
    let line: Vec<(f64, f64)> = plot_curve
        .iter()
        .map(|&(x, _)| (x, 1.0 - 2.0 * x))
        .collect();
    let label = format!("R_n, n = {n_max}");
    let svg = line_plot(
        "Minimal shortfall risk below the threshold",
        "initial capital x",
        "risk",
        &[
            Series {
                label: &label,
                points: &plot_curve,
                dashed: false,
            },
            Series {
                label: "1 - 2x",
                points: &line,
                dashed: true,
            },
        ],
    );
    report.files.push(write_text(dir, "line_check.svg", &svg)?);
    Ok(report)
}

/// Closed-form, Monte Carlo and lattice values of ν.
pub fn nu_checks(
    params: &ModelParams,
    lattice_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<Check>, Vec<f64>)> {
    let exact = compute_nu(params)?;
    let (mc, se) = nu_monte_carlo(params, samples, seed)?;
    let lat = Lattice::build(*params, lattice_steps)?;
    let on_lattice = nu_lattice(&lat);
    let checks = vec![
        Check::at_most("nu_monte_carlo_std_errors", (mc - exact).abs() / se, 3.0),
        Check::at_most(
            format!("nu_lattice_abs_error_n{lattice_steps}"),
            (on_lattice - exact).abs(),
            0.005,
        ),
    ];
    Ok((checks, vec![exact, mc, se, on_lattice]))
}

/// Spot checks of `R_n(x) = F_n(λ) - λx` at `x = F'_n(λ)`.
pub fn strong_duality_checks(
    lat: &Lattice,
    curve: &DualCurve,
    targets: &[f64],
    points: usize,
) -> Result<(Vec<Check>, Vec<Vec<f64>>)> {
    let payoff = counterexample_payoff(lat)?;
    let surface = solve_surface(lat, &payoff, GridSpec { points })?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &target in targets {
        let i = (1..curve.len().saturating_sub(1))
            .min_by(|&a, &b| {
                (curve.lambdas[a] - target)
                    .abs()
                    .total_cmp(&(curve.lambdas[b] - target).abs())
            })
            .context("dual curve too short for a symmetric slope")?;
        let l = curve.lambdas[i];
        let x = curve.slope_at(i)?;
        let risk = surface.risk_at(x);
        let dual = curve.values[i] - l * x;
        checks.push(Check::at_most(
            format!("strong_duality_lambda{}", tag(l)),
            (risk - dual).abs(),
            0.03,
        ));
        rows.push(vec![l, x, risk, dual, risk - dual]);
    }
    Ok((checks, rows))
}

/// Dual function, its flatness beyond 2 and its left slope at 2.
pub fn run_dual_curve(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let nu = compute_nu(&params)?;
    let xs = if cfg.x_values.is_empty() {
        vec![0.0, 0.5 * nu, 0.9 * nu]
    } else {
        cfg.x_values.clone()
    };
    let steps = sorted_steps(cfg);
    let grid_lambdas = lambdas(cfg);
    let mut report = Report::new("dual_curve", cfg.seed);
    let mut rows = Vec::new();
    let n_max = *steps.last().unwrap();
    let mut last = None;

    for &n in &steps {
        let lat = Lattice::build(params, n)?;
        let cancel = counterexample_cancel(&lat)?;
        let curve = DualCurve::compute(&lat, &cancel, &grid_lambdas)?;
        for (&l, &f) in curve.lambdas.iter().zip(&curve.values) {
            let mut row = vec![n as f64, l, f];
            row.extend(xs.iter().map(|&x| f - l * x));
            rows.push(row);
        }
        if n == n_max {
            last = Some((lat, cancel, curve));
        }
    }
    let (lat, cancel, curve) = last.expect("steps is nonempty");

    for l in [2.0, 3.0, 10.0] {
        let (f, _) = compute_f(&lat, &cancel, l)?;
        report.push(Check::at_most(
            format!("flat_lambda{}_n{n_max}", tag(l)),
            (f - 1.0).abs(),
            0.01,
        ));
    }
    let drop = curve
        .values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max);
    report.push(Check::at_most("nondecreasing_defect", drop, 1e-6));
    report.push(Check::at_most(
        "concavity_defect",
        curve.concavity_defect(),
        1e-6,
    ));
    let x0 = *cancel.get(0, 0);
    let over = curve
        .lambdas
        .iter()
        .zip(&curve.values)
        .map(|(&l, &f)| f - l.min(1.0) * x0)
        .fold(f64::NEG_INFINITY, f64::max);
    report.push(Check::at_most("immediate_stop_bound", over, ROUNDING));
    if curve.lambdas.contains(&2.0) {
        let slope = left_derivative_f(&curve, 2.0)?;
        report.push(Check::at_least("left_slope_at_2", slope, nu - 0.01));
    } else {
        report
            .notes
            .push("λ = 2 not sampled; left slope skipped".into());
    }

    let (checks, nu_row) = nu_checks(&params, cfg.nu_lattice_steps, cfg.mc_samples, cfg.seed)?;
    for c in checks {
        report.push(c);
    }
    let (checks, strong_rows) = strong_duality_checks(
        &lat,
        &curve,
        &[1.2, 1.4, 1.6, 1.8, 1.95],
        cfg.wealth_grid_points,
    )?;
    for c in checks {
        report.push(c);
    }

    let dir = &cfg.output_dir;
    let mut header: Vec<String> = vec!["n".into(), "lambda".into(), "F".into()];
    header.extend(xs.iter().map(|x| format!("bound_x={}", fmt_sig(*x))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    report
        .files
        .push(write_csv(dir, "dual_curve.csv", &header, &rows)?);
    report.files.push(write_csv(
        dir,
        "nu.csv",
        &["closed_form", "monte_carlo", "std_error", "lattice"],
        &[nu_row],
    )?);
    report.files.push(write_csv(
        dir,
        "strong_duality.csv",
        &["lambda", "x", "R_n", "dual", "difference"],
        &strong_rows,
    )?);
    let pts: Vec<(f64, f64)> = curve
        .lambdas
        .iter()
        .copied()
        .zip(curve.values.iter().copied())
        .collect();
    let label = format!("F_n, n = {n_max}");
    let svg = line_plot(
        "Dual function",
        "multiplier",
        "F",
        &[Series {
            label: &label,
            points: &pts,
            dashed: false,
        }],
    );
    report.files.push(write_text(dir, "dual_curve.svg", &svg)?);
    Ok(report)
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Refinement of `R_n` without cancellation at 0, against the Monte Carlo
/// modulus of continuity of the payoff.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let steps = sorted_steps(cfg);
    let mut report = Report::new("convergence", cfg.seed);

    let surfaces: Vec<_> = steps
        .iter()
        .map(|&n| -> Result<_> {
            let lat = Lattice::build(params, n)?;
            let payoff = counterexample_payoff(&lat)?.with_cancel_at_zero(false);
            Ok(solve_surface(&lat, &payoff, spec(cfg))?)
        })
        .collect::<Result<_>>()?;
    let x_hi = surfaces
        .iter()
        .map(|s| s.grid().zmax(0, 0))
        .fold(0.0, f64::max);
    let xs: Vec<f64> = (0..=200).map(|i| x_hi * i as f64 / 200.0).collect();
    let curves: Vec<Vec<f64>> = surfaces
        .iter()
        .map(|s| xs.iter().map(|&x| s.risk_at(x)).collect())
        .collect();
    drop(surfaces);

    let unit = steps.iter().fold(1, |acc, &n| lcm(acc, n));
    let fine = cfg.modulus_fine_steps.div_ceil(unit) * unit;
    let modulus = payoff_modulus(&params, &steps, fine, cfg.modulus_paths, cfg.seed)?;

    let mut diff_rows = Vec::new();
    let mut diffs = Vec::new();
    for i in 1..steps.len() {
        let sup = curves[i - 1]
            .iter()
            .zip(&curves[i])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (m, se) = modulus[i - 1];
        diffs.push(sup);
        diff_rows.push(vec![steps[i - 1] as f64, steps[i] as f64, sup, m, se]);
        report.push(Check::at_most(
            format!("sup_diff_n{}_n{}_within_modulus", steps[i - 1], steps[i]),
            sup,
            m + 3.0 * se,
        ));
    }
    if diffs.len() > 1 {
        let rise = diffs
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        report.push(Check::at_most("sup_diffs_shrink", rise, ROUNDING));
    }

    let rows: Vec<Vec<f64>> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut row = vec![x];
            row.extend(curves.iter().map(|c| c[i]));
            row
        })
        .collect();
    let mut header = vec!["x".to_string()];
    header.extend(steps.iter().map(|n| format!("R_{n}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let dir = &cfg.output_dir;
    report
        .files
        .push(write_csv(dir, "convergence.csv", &header, &rows)?);
    report.files.push(write_csv(
        dir,
        "convergence_diffs.csv",
        &[
            "n_prev",
            "n",
            "sup_diff",
            "modulus_prev",
            "modulus_std_error",
        ],
        &diff_rows,
    )?);
    let pts: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| xs.iter().copied().zip(c.iter().copied()).collect())
        .collect();
    let labels: Vec<String> = steps.iter().map(|n| format!("n = {n}")).collect();
    let series: Vec<Series> = pts
        .iter()
        .zip(&labels)
        .map(|(p, l)| Series {
            label: l,
            points: p,
            dashed: false,
        })
        .collect();
    let svg = line_plot(
        "Risk without cancellation at 0",
        "initial capital x",
        "risk",
        &series,
    );
    report.files.push(write_text(dir, "convergence.svg", &svg)?);
    Ok(report)
}

/// Best risk inside the restricted cancellation classes.
pub fn run_nonattainment(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let nu = compute_nu(&params)?;
    let xs = line_xs(cfg, nu, false)?;
    let steps = sorted_steps(cfg);
    let n_max = *steps.last().unwrap();
    let mut report = Report::new("nonattainment", cfg.seed);
    let mut rows = Vec::new();

    for &n in &steps {
        let lat = Lattice::build(params, n)?;
        let payoff = counterexample_payoff(&lat)?;
        let cells: Vec<_> = xs
            .par_iter()
            .map(|&x| -> Result<_> {
                let risks = class_risks(&lat, x, spec(cfg))?;
                let exact = maturity_static_risk(&lat, &maturity_class(&payoff), x);
                Ok((x, risks, exact))
            })
            .collect::<Result<_>>()?;
        for (x, risks, exact) in cells {
            let ex = risks.excess(x);
            let line = 1.0 - 2.0 * x;
            rows.push(vec![
                n as f64,
                x,
                risks.immediate,
                risks.maturity,
                exact,
                risks.interior,
                ex.immediate,
                ex.maturity,
                exact - line,
                ex.interior,
            ]);
            if n == n_max {
                let label = format!("x{}_n{n}", tag(x));
                report.push(Check::at_most(
                    format!("immediate_excess_minus_x_{label}"),
                    (ex.immediate - x).abs(),
                    1e-9,
                ));
                report.push(Check::greater(
                    format!("maturity_excess_{label}"),
                    ex.maturity,
                    0.0,
                ));
                report.push(Check::greater(
                    format!("maturity_excess_static_{label}"),
                    exact - line,
                    0.0,
                ));
                report.push(Check::greater(
                    format!("interior_excess_{label}"),
                    ex.interior,
                    0.0,
                ));
            }
        }
    }
    report.files.push(write_csv(
        &cfg.output_dir,
        "nonattainment.csv",
        &[
            "n",
            "x",
            "risk_immediate",
            "risk_maturity",
            "risk_maturity_static",
            "risk_interior",
            "excess_immediate",
            "excess_maturity",
            "excess_maturity_static",
            "excess_interior",
        ],
        &rows,
    )?);
    Ok(report)
}

/// Small random game on at most `max_steps` levels.
pub fn random_instance(rng: &mut ChaCha8Rng, max_steps: usize) -> (Lattice, GamePayoff, GridSpec) {
    let n = rng.random_range(1..=max_steps);
    let lat = loop {
        let params = ModelParams::new(
            rng.random_range(0.5..1.5),
            rng.random_range(0.1..0.8),
            rng.random_range(-0.6..0.6),
            rng.random_range(0.5..2.0),
        )
        .expect("parameters drawn from valid ranges");
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
        .expect("buyer payoff below seller payoff")
        .restrict_cancellation(&cancel)
        .with_cancel_at_zero(rng.random_bool(0.5));
    let spec = GridSpec {
        points: rng.random_range(2..=5),
    };
    (lat, payoff, spec)
}

/// Largest deviations over the random oracle instances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleStats {
    pub shortfall_vs_brute: f64,
    pub saddle_gap: f64,
    pub saddle_vs_dp: f64,
    pub price_vs_dp: f64,
    pub evaluations: usize,
}

pub fn oracle_instances(instances: usize, seed: u64) -> Result<OracleStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = OracleStats::default();
    for _ in 0..instances {
        let (lat, payoff, spec) = random_instance(&mut rng, 2);
        let grid = WealthGrid::new(&lat, &payoff, spec)?;
        let surface = solve_surface(&lat, &payoff, spec)?;
        let top = grid.zmax(0, 0);
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0, 1.25] {
            let x = frac * top + if frac > 1.0 { 0.05 } else { 0.0 };
            let dp = surface.risk_at(x);
            let brute = shortfall_brute(&lat, &payoff, &grid, x);
            stats.shortfall_vs_brute = stats.shortfall_vs_brute.max((dp - brute).abs());
            stats.evaluations += 1;
        }
        let n = lat.steps();
        let wealth = NodeTable::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let tree = HistoryTree::binomial(&lat, &wealth)?;
        let saddle = dynkin_saddle(&tree, &payoff, GameKind::Shortfall);
        let dp = shortfall_game_value(&lat, &payoff, &wealth)?.value;
        stats.saddle_gap = stats
            .saddle_gap
            .max((saddle.inf_sup - saddle.sup_inf).abs());
        stats.saddle_vs_dp = stats.saddle_vs_dp.max((saddle.inf_sup - dp).abs());
        let price = dynkin_saddle(&tree, &payoff, GameKind::Price);
        stats.saddle_gap = stats.saddle_gap.max((price.inf_sup - price.sup_inf).abs());
        let dp_price = game_price_q(&lat, &payoff)?;
        stats.price_vs_dp = stats.price_vs_dp.max((price.inf_sup - dp_price).abs());
    }
    Ok(stats)
}

/// Largest violations of the envelope laws over random functions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvelopeStats {
    pub above_function: f64,
    pub slope_decrease: f64,
    pub idempotence: f64,
    pub chord_mismatch: f64,
    pub mean_error: f64,
    pub attainment_error: f64,
    pub gaps_tested: usize,
}

pub fn envelope_cases(cases: usize, seed: u64) -> Result<EnvelopeStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = EnvelopeStats::default();
    for _ in 0..cases {
        let m = rng.random_range(2..=12);
        let mut knots = vec![rng.random_range(-5.0..5.0)];
        for _ in 1..m {
            let last = knots[knots.len() - 1];
            knots.push(last + rng.random_range(0.01..1.0));
        }
        let values: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f = PiecewiseLinearFn::new(knots.clone(), values.clone())?;
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let env = convex_envelope(&f);
        let again = convex_envelope(&env);
        let chords = envelope_by_chords(&knots, &values);
        for ((&x, &y), c) in knots.iter().zip(&values).zip(chords) {
            let e = env.eval(x)?;
            s.above_function = s.above_function.max((e - y) / scale);
            s.idempotence = s.idempotence.max((again.eval(x)? - e).abs() / scale);
            s.chord_mismatch = s.chord_mismatch.max((e - c).abs() / scale);
        }
        for w in env.slopes().windows(2) {
            s.slope_decrease = s.slope_decrease.max((w[0] - w[1]) / scale);
        }
        for &(a, b) in gap_intervals(&f, &env)?.intervals() {
            let x = a + (b - a) * rng.random_range(0.001..0.999);
            let mix = randomize_to_envelope(x, (a, b))?;
            s.mean_error = s.mean_error.max((mix.mean() - x).abs() / x.abs().max(1.0));
            let attained = mix.expect(|t| f.eval(t).unwrap_or(f64::NAN));
            s.attainment_error = s
                .attainment_error
                .max((attained - env.eval(x)?).abs() / scale);
            s.gaps_tested += 1;
        }
    }
    Ok(s)
}

/// Shape and hedge invariants of the solver output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureStats {
    pub slice_shape: f64,
    pub slice_top: f64,
    pub max_drift: f64,
    pub min_wealth: f64,
    pub root_increase: f64,
    pub root_concavity: f64,
    pub root_increase_cancel: f64,
    pub root_concavity_cancel: f64,
    pub plan_states: usize,
}

/// Checks the counterexample solution on `n` levels at capital `x`. The root
/// shape is measured both with and without cancellation at 0; only the latter
/// is convex for every payoff.
pub fn structure_stats(
    params: &ModelParams,
    n: usize,
    x: f64,
    points: usize,
) -> Result<StructureStats> {
    let lat = Lattice::build(*params, n)?;
    let payoff = counterexample_payoff(&lat)?;
    let spec = GridSpec { points };
    let sol = solve_shortfall(&lat, &payoff, x, spec)?;
    let (slice_shape, slice_top) = sol.surface.shape_defects();
    let max_drift = sol
        .plan
        .q_drifts(&lat)
        .iter()
        .flatten()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    let min_wealth = sol.plan.min_wealth();
    let plan_states = sol.plan.state_count();
    let (root_increase_cancel, root_concavity_cancel) = root_shape(&sol.surface);
    drop(sol);
    let held = solve_surface(&lat, &payoff.with_cancel_at_zero(false), spec)?;
    let (root_increase, root_concavity) = root_shape(&held);
    Ok(StructureStats {
        slice_shape,
        slice_top,
        max_drift,
        min_wealth,
        root_increase,
        root_concavity,
        root_increase_cancel,
        root_concavity_cancel,
        plan_states,
    })
}

/// Largest increase and largest concave second difference of the root curve.
fn root_shape(surface: &gameshort_core::ValueSurface) -> (f64, f64) {
    let top = surface.grid().zmax(0, 0);
    let r: Vec<f64> = (0..=400)
        .map(|i| surface.risk_at(top * i as f64 / 400.0))
        .collect();
    let increase = r
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let concavity = r
        .windows(3)
        .map(|w| -(w[0] - 2.0 * w[1] + w[2]))
        .fold(f64::NEG_INFINITY, f64::max);
    (increase, concavity)
}

/// Oracle equivalence, envelope laws and structural invariants.
pub fn run_oracle_suite(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let mut report = Report::new("oracle_suite", cfg.seed);

    let o = oracle_instances(cfg.instances, cfg.seed)?;
    report.push(Check::at_most(
        "shortfall_vs_exhaustive",
        o.shortfall_vs_brute,
        1e-6,
    ));
    report.push(Check::at_most(
        "dynkin_inf_sup_minus_sup_inf",
        o.saddle_gap,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "dynkin_enumeration_vs_induction",
        o.saddle_vs_dp,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "price_enumeration_vs_induction",
        o.price_vs_dp,
        ROUNDING,
    ));

    let e = envelope_cases(cfg.envelope_cases, cfg.seed.wrapping_add(1))?;
    report.push(Check::at_most(
        "envelope_above_function",
        e.above_function,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "envelope_slope_decrease",
        e.slope_decrease,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "envelope_idempotence",
        e.idempotence,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "envelope_vs_chords",
        e.chord_mismatch,
        ROUNDING,
    ));
    report.push(Check::at_most("randomization_mean", e.mean_error, ROUNDING));
    report.push(Check::at_most(
        "randomization_attains_envelope",
        e.attainment_error,
        ROUNDING,
    ));

    let nu = compute_nu(&params)?;
    let n = cfg.max_steps();
    let s = structure_stats(&params, n, 0.5 * nu, cfg.wealth_grid_points)?;
    report.push(Check::at_most(
        "slice_convex_nonincreasing",
        s.slice_shape,
        ROUNDING,
    ));
    report.push(Check::at_most("slice_zero_at_zmax", s.slice_top, ROUNDING));
    report.push(Check::at_most("plan_q_martingale", s.max_drift, 1e-9));
    report.push(Check::at_least("plan_nonnegative", s.min_wealth, 0.0));
    report.push(Check::at_most(
        "root_nonincreasing",
        s.root_increase,
        ROUNDING,
    ));
    report.push(Check::at_most("root_convex", s.root_concavity, ROUNDING));
    report.push(Check::at_most(
        "root_nonincreasing_cancel_at_0",
        s.root_increase_cancel,
        ROUNDING,
    ));
    report.push(Check::at_most(
        "root_convex_cancel_at_0",
        s.root_concavity_cancel,
        ROUNDING,
    ));
    report.notes.push(format!(
        "{} shortfall evaluations, {} gap intervals, {} plan states at n = {n}",
        o.evaluations, e.gaps_tested, s.plan_states
    ));

    let rows = vec![vec![
        o.shortfall_vs_brute,
        o.saddle_gap,
        o.saddle_vs_dp,
        o.price_vs_dp,
        e.chord_mismatch,
        e.attainment_error,
        s.slice_shape,
        s.max_drift,
        s.root_concavity,
    ]];
    report.files.push(write_csv(
        &cfg.output_dir,
        "oracle_suite.csv",
        &[
            "shortfall_vs_brute",
            "saddle_gap",
            "saddle_vs_dp",
            "price_vs_dp",
            "chord_mismatch",
            "attainment_error",
            "slice_shape",
            "max_drift",
            "root_concavity",
        ],
        &rows,
    )?);
    Ok(report)
}

fn price_payoff(cfg: &ExperimentConfig, lat: &Lattice) -> Result<GamePayoff> {
    Ok(match cfg.payoff {
        PayoffKind::Counterexample => counterexample_payoff(lat)?,
        PayoffKind::Constant => {
            let c = NodeTable::filled(lat.steps(), cfg.constant);
            GamePayoff::every_level(c.clone(), c)?
        }
        PayoffKind::GamePut => {
            let y = lat.stock_table().map(|_, _, &s| (cfg.strike - s).max(0.0));
            let x = y.map(|_, _, &v| v + cfg.penalty);
            GamePayoff::every_level(y, x)?
        }
    })
}

/// Perfect-hedging price of the configured game option.
pub fn run_price(cfg: &ExperimentConfig) -> Result<Report> {
    let params = cfg.model()?;
    let mut report = Report::new("price", cfg.seed);
    let mut rows = Vec::new();
    for n in sorted_steps(cfg) {
        let lat = Lattice::build(params, n)?;
        let payoff = price_payoff(cfg, &lat)?;
        let price = game_price_q(&lat, &payoff)?;
        let mut row = vec![n as f64, price];
        if n <= 3 {
            let tree = HistoryTree::binomial(&lat, &NodeTable::filled(n, 0.0))?;
            let brute = dynkin_saddle(&tree, &payoff, GameKind::Price);
            report.push(Check::at_most(
                format!("price_vs_enumeration_n{n}"),
                (brute.inf_sup - price).abs(),
                ROUNDING,
            ));
            row.push(brute.inf_sup);
        } else {
            row.push(f64::NAN);
        }
        if cfg.payoff == PayoffKind::Constant {
            report.push(Check::at_most(
                format!("constant_price_n{n}"),
                (price - cfg.constant).abs(),
                ROUNDING,
            ));
        }
        report.push(Check::at_least(
            format!("price_nonnegative_n{n}"),
            price,
            0.0,
        ));
        rows.push(row);
    }
    report.files.push(write_csv(
        &cfg.output_dir,
        "price.csv",
        &["n", "price", "price_enumerated"],
        &rows,
    )?);
    Ok(report)
}
