use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
[system]
generator = "benchmark2x2"

[experiment]
t_grid = [400, 800, 1600]
n_seeds = 6
base_seed = 3
checkpoints = [100]

[[learner]]
kind = "algorithm_a"
c0 = 7.0
eps0 = 0.16
practical_tau_scale = 5e-9
practical_lambda_scale = 6.6e-7

[[learner]]
kind = "oracle"
"#;

#[test]
fn dare_prints_the_scalar_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "[system]\na = [[0.4472135954999579]]\nb = [[0.0]]\nq = [[1.0]]\nr = [[1.0]]\nsigma = 1.0\n",
    );
    let out = lqr(&["dare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["P"][0][0].as_f64().unwrap() - 1.25).abs() < 1e-10);
    assert!((v["J"].as_f64().unwrap() - 1.25).abs() < 1e-10);
}

#[test]
fn run_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let mut csvs = Vec::new();
    for w in ["1", "3"] {
        let out_dir = dir.path().join(format!("out{w}"));
        let out = lqr(&["run", "--config", cfg.to_str().unwrap(), "--workers", w, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(std::fs::read(out_dir.join("curves.csv")).unwrap());
        assert!(out_dir.join("summary.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);

    let fit_dir = dir.path().join("fit");
    let out = lqr(&[
        "fit",
        "--curves",
        dir.path().join("out1/curves.csv").to_str().unwrap(),
        "--out",
        fit_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_dir(&fit_dir).unwrap().count() > 0);
}

#[test]
fn seed_override_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let run = |seed: &str| {
        let out_dir = dir.path().join(format!("s{seed}"));
        let out = lqr(&["run", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(out_dir.join("curves.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn simulate_dumps_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out_dir = dir.path().join("sim");
    let out = lqr(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--learner",
        "oracle",
        "--horizon",
        "50",
        "--dump-trajectory",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<PathBuf> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    let csv = files.iter().find(|p| p.extension().is_some_and(|e| e == "csv")).expect("trajectory csv");
    let rows = std::fs::read_to_string(csv).unwrap().lines().count();
    assert!(rows >= 51, "{rows} rows");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(lqr(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.toml", "[system]\ngenerator = \"benchmark2x2\"\n[experiment]\nt_grid = []\nn_seeds = 0\n");
    assert_eq!(lqr(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    let unknown = write(dir.path(), "u.toml", &SMALL.replace("oracle", "telepathy"));
    assert_eq!(lqr(&["run", "--config", unknown.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(lqr(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // An unstable mode the input cannot reach: no stabilizing solution exists.
    let cfg = write(
        dir.path(),
        "u.toml",
        "[system]\na = [[2.0, 0.0], [0.0, 0.5]]\nb = [[0.0], [1.0]]\nq = [[1.0, 0.0], [0.0, 1.0]]\nr = [[1.0]]\nsigma = 1.0\n",
    );
    let out = lqr(&["dare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_exits_cleanly() {
    let out = lqr(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["dare", "simulate", "run", "lower-bound", "fit", "calibrate"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}
