use std::fs;
use std::path::Path;
use std::process::Command;

use gameshort_cli::config::{Experiment, ExperimentConfig, PayoffKind};
use gameshort_cli::experiments;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gameshort"))
}

fn small(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        steps: vec![10, 20],
        wealth_grid_points: 41,
        mc_samples: 20_000,
        nu_lattice_steps: 100,
        modulus_paths: 200,
        modulus_fine_steps: 200,
        instances: 20,
        envelope_cases: 50,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn every_experiment_reproduces_its_csv() {
    for exp in [
        Experiment::LineCheck,
        Experiment::DualCurve,
        Experiment::Convergence,
        Experiment::Nonattainment,
        Experiment::OracleSuite,
        Experiment::Price,
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = experiments::run(exp, &small(a.path())).unwrap();
        experiments::run(exp, &small(b.path())).unwrap();
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert!(!fa.is_empty(), "{} wrote no csv", exp.name());
        assert_eq!(fa, fb, "{} is not reproducible", exp.name());
        assert!(a
            .path()
            .join(format!("{}.summary.json", exp.name()))
            .exists());
        assert!(!ra.checks.is_empty());
    }
}

#[test]
fn csv_uses_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    experiments::run(Experiment::LineCheck, &small(dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join("line_check.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,x,R_n,line,gap,bound_lambda2,bound_best"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    // R_n(0) = 1 on every lattice
    assert_eq!(row[2], "1.00000000000");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let digits = row[1].trim_start_matches(['0', '.']).len();
    assert_eq!(digits, 12, "{}", row[1]);
}

#[test]
fn constant_claim_prices_at_its_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        payoff: PayoffKind::Constant,
        constant: 0.7,
        steps: vec![1, 2, 3, 30],
        ..small(dir.path())
    };
    let report = experiments::run(Experiment::Price, &cfg).unwrap();
    assert!(report.passed());
    assert!(report.check("constant_price_n30").unwrap().measured < 1e-12);
    assert!(report.check("price_vs_enumeration_n3").is_some());
}

#[test]
fn capital_outside_the_threshold_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        x_values: vec![0.5],
        ..small(dir.path())
    };
    let err = experiments::run(Experiment::LineCheck, &cfg).unwrap_err();
    assert!(
        err.to_string().contains("outside the capital range"),
        "{err}"
    );
    let cfg = ExperimentConfig {
        x_values: vec![0.0],
        ..small(dir.path())
    };
    // zero capital is fine for the line but not for the class diagnostics
    assert!(experiments::run(Experiment::Nonattainment, &cfg).is_err());
}

#[test]
fn binary_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "steps = [4]\nwealth_grid_points = 11\npayoff = \"game_put\"\nstrike = 1.1\n",
    )
    .unwrap();
    let out = bin()
        .args(["price", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .args(["--steps", "2,3", "--seed", "5"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS price_vs_enumeration_n3"), "{stdout}");
    let summary = fs::read_to_string(dir.path().join("o/price.summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(json["seed"], 5);
    // enumeration and sign checks for each of the two lattices
    assert_eq!(json["checks"].as_array().unwrap().len(), 4);
}

#[test]
fn binary_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "stepz = [4]\n").unwrap();
    let out = bin()
        .args(["price", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));

    let out = bin().arg("no_such_experiment").output().unwrap();
    assert!(!out.status.success());

    let out = bin()
        .args([
            "line-check",
            "--x",
            "0.9",
            "--steps",
            "5",
            "--grid",
            "11",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_checks_give_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // the gap is far from the line on a 2-point wealth grid
    let out = bin()
        .args(["line-check", "--steps", "30", "--grid", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert_eq!(out.status.code(), Some(1));
}
