use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvlasso::cli::{load_csv_matrix, write_csv_matrix};
use cvlasso::DesignMatrix;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn cvlasso(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvlasso"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn records(text: &str) -> Vec<Value> {
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Compares against a stored golden file; `CVLASSO_BLESS=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if std::env::var_os("CVLASSO_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

const DATA: [&str; 4] = ["--design", "design.csv", "--response", "response.csv"];

#[test]
fn fit_matches_golden() {
    let mut args = vec!["fit"];
    args.extend(DATA);
    args.extend(["--seed", "42"]);
    let text = stdout(&cvlasso(&fixtures(), &args));
    check_golden("fit.golden.jsonl", &text);

    let recs = records(&text);
    assert_eq!(recs[0]["record"], "meta");
    assert_eq!(recs[0]["seed"], 42);
    assert_eq!(recs[0]["generator"], "chacha20-seed_from_u64-msb");
    assert_eq!(recs[0]["config"]["delta"], 0.05);
    assert_eq!(recs[1]["record"], "estimate");
    assert_eq!(recs[1]["beta_cv"].as_array().unwrap().len(), 5);
}

#[test]
fn fit_output_matches_library() {
    let mut args = vec!["fit"];
    args.extend(DATA);
    args.extend(["--seed", "9"]);
    let recs = records(&stdout(&cvlasso(&fixtures(), &args)));
    let x = load_csv_matrix(fixtures().join("design.csv")).unwrap();
    let y = cvlasso::cli::load_csv_vector(fixtures().join("response.csv")).unwrap();
    let est = cvlasso::cv_lasso(
        &x,
        &y,
        &cvlasso::CvOptions {
            seed: 9,
            ..Default::default()
        },
    )
    .unwrap();
    let beta: Vec<f64> = recs[1]["beta_cv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(beta, est.beta_cv);
    assert_eq!(recs[1]["k_hat"].as_f64().unwrap(), est.k_hat);
    assert_eq!(recs[1]["sigma2_hat"].as_f64(), est.sigma2_hat);
}

#[test]
fn fit_with_zero_grids_returns_zero() {
    let mut args = vec!["fit"];
    args.extend(DATA);
    args.extend(["--n1", "0", "--n2", "0", "--format", "csv"]);
    let text = stdout(&cvlasso(&fixtures(), &args));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 2);
    let cells: Vec<&str> = body[1].split(',').collect();
    assert_eq!(cells.len(), 8 + 5);
    assert!(cells[8..].iter().all(|c| c.parse::<f64>().unwrap() == 0.0));
    assert_eq!(cells[0].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn fit_twice_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.csv");
    let run = || {
        let mut args = vec!["fit"];
        args.extend(DATA);
        args.extend([
            "--seed",
            "5",
            "--format",
            "csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        stdout(&cvlasso(&fixtures(), &args));
        fs::read(&out).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let text = String::from_utf8(first).unwrap();
    for key in [
        "# tool=cvlasso",
        "# version=",
        "# generator=",
        "# seed=5",
        "# config=",
    ] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn path_matches_golden() {
    let mut args = vec!["path"];
    args.extend(DATA);
    args.extend(["--delta", "0.1", "--steps", "15", "--format", "csv"]);
    let text = stdout(&cvlasso(&fixtures(), &args));
    check_golden("path.golden.csv", &text);

    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    for w in rows.windows(2) {
        assert!(
            w[1][2] <= w[0][2],
            "residual_ss increased: {} -> {}",
            w[0][2],
            w[1][2]
        );
        assert!(w[1][1] <= w[1][0] + 1e-12);
    }
}

#[test]
fn path_single_zero_budget() {
    let mut args = vec!["path"];
    args.extend(DATA);
    args.extend(["--grid", "0"]);
    let recs = records(&stdout(&cvlasso(&fixtures(), &args)));
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1]["k"], 0.0);
    assert!(recs[1]["beta"].as_array().unwrap().iter().all(|b| b == 0.0));
}

#[test]
fn path_rejects_decreasing_grid() {
    let mut args = vec!["path"];
    args.extend(DATA);
    args.extend(["--grid", "1,0.5"]);
    assert_eq!(cvlasso(&fixtures(), &args).status.code(), Some(2));
}

#[test]
fn bound_prints_constants() {
    let args = [
        "bound", "--n", "100", "--p", "10", "--sigma", "1", "--l-star", "1", "--delta", "0", "--m",
        "1", "--l1", "0", "--l2", "0",
    ];
    let recs = records(&stdout(&cvlasso(&fixtures(), &args)));
    let rep = &recs[1];
    assert_eq!(rep["record"], "bound");
    assert!((rep["c1"].as_f64().unwrap() - 39.19184).abs() < 1e-5);
    assert!((rep["c2"].as_f64().unwrap() - 153.0).abs() < 1e-9);
    let e_n = rep["e_n"].as_f64().unwrap();
    let c2_term = 153.0 * (20f64.ln() / 100.0).sqrt();
    assert!((rep["r"].as_f64().unwrap() - (e_n + c2_term)).abs() < 1e-9);

    let mut doubled = args;
    doubled[2] = "200";
    let r2 = records(&stdout(&cvlasso(&fixtures(), &doubled)))[1]["r"]
        .as_f64()
        .unwrap();
    assert!(r2 < rep["r"].as_f64().unwrap());
}

#[test]
fn bound_missing_input_is_usage_error() {
    let out = cvlasso(&fixtures(), &["bound", "--n", "100", "--p", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_three_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.csv"), "1,2\n3\n").unwrap();
    fs::write(dir.path().join("y.csv"), "1\n2\n").unwrap();
    let out = cvlasso(
        dir.path(),
        &["fit", "--design", "x.csv", "--response", "y.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("line 2"), "{err}");

    let out = cvlasso(
        dir.path(),
        &["fit", "--design", "missing.csv", "--response", "y.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn strict_mode_fails_on_non_convergence() {
    let mut args = vec!["fit"];
    args.extend(DATA);
    args.extend(["--max-iter", "1", "--tol", "1e-14", "--strict"]);
    assert_eq!(cvlasso(&fixtures(), &args).status.code(), Some(4));
    args.pop();
    assert_eq!(cvlasso(&fixtures(), &args).status.code(), Some(0));
}

#[test]
fn simulate_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = r#"{"n": 30, "p": 4, "design_family": "gaussian-iid",
        "beta_star": [0.5, 0.0, -0.25, 0.0], "sigma": 1.0, "replications": 4, "master_seed": 3}"#;
    fs::write(dir.path().join("s.json"), scenario).unwrap();
    let recs = records(&stdout(&cvlasso(
        dir.path(),
        &["simulate", "--scenario", "s.json"],
    )));
    assert_eq!(recs.len(), 1 + 4 + 1);
    assert_eq!(recs[0]["generator"], cvlasso::simlab::REPLICATE_GENERATOR);
    assert!(recs[1..5].iter().all(|r| r["record"] == "replicate"));
    let summary = &recs[5];
    assert_eq!(summary["record"], "summary");
    assert!(summary["bound_report"]["r"].as_f64().unwrap() > 0.0);
    assert!(summary["domination"]["mspe"].is_boolean());
}

#[test]
fn written_matrix_reads_back_bitwise() {
    let values = [
        0.1,
        -1.0 / 3.0,
        std::f64::consts::PI,
        1e-300,
        -2.5e300,
        f64::MIN_POSITIVE,
        123_456_789.123_456_78,
        0.0,
        -0.0,
    ];
    let x = DesignMatrix::from_row_major(3, 3, values.to_vec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let mut f = fs::File::create(&path).unwrap();
    write_csv_matrix(&mut f, &x).unwrap();
    drop(f);
    let back = load_csv_matrix(&path).unwrap();
    let bits = |m: &DesignMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&x));
}
