mod common;

use lqr_core::control::{expected_cumulative_cost, policy_cost, Controller};
use lqr_core::harness::config::ExperimentConfig;
use lqr_core::harness::fit::{
    fit_exponent, fit_log_squared, fit_sqrt, mean, read_final_regrets, stderr, RegretSamples,
};
use lqr_core::harness::run::run_experiment;
use lqr_core::rng::RngStream;

use common::*;

fn config(learners: &str, grid: &str, seeds: usize, cv: bool) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        [system]
        generator = "benchmark2x2"
        [experiment]
        t_grid = {grid}
        n_seeds = {seeds}
        base_seed = 31
        checkpoints = [64, 512]
        control_variate = {cv}
        {learners}
        "#
    ))
    .unwrap()
}

const MIXED: &str = r#"
    [[learner]]
    kind = "algorithm_a"
    c0 = 7.0
    eps0 = 0.16
    practical_tau_scale = 5e-9
    practical_lambda_scale = 6.6e-7
    [[learner]]
    kind = "ce_eps_greedy"
    [[learner]]
    kind = "oracle"
"#;

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = config(MIXED, "[500, 2000]", 9, true);
    let one = run_experiment(&cfg, 1).unwrap();
    let three = run_experiment(&cfg, 3).unwrap();
    assert_eq!(one.records, three.records);
    let json = |r: &lqr_core::harness::ExperimentResult| serde_json::to_string(&r.summary().unwrap()).unwrap();
    assert_eq!(json(&one), json(&three));
}

#[test]
fn checkpoints_are_consistent_prefix_sums() {
    let cfg = config(MIXED, "[500, 2000]", 5, false);
    let res = run_experiment(&cfg, workers()).unwrap();
    for r in &res.records {
        let data = r.outcome.as_ref().unwrap();
        let times: Vec<usize> = data.checkpoints.iter().map(|c| c.0).collect();
        assert_eq!(times, cfg.checkpoints_for(r.horizon));
        assert_eq!(data.checkpoints[0], (0, 0.0));
        assert_eq!(*times.last().unwrap(), r.horizon);
        assert!(data.checkpoints.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(data.oracle.is_none());
    }
    // Plain regret: the curve is the cost minus tJ⋆ at every checkpoint.
    let curve = res.curve(0, 2000).unwrap();
    let first = res.records.iter().find(|r| r.learner == 0 && r.horizon == 2000).unwrap();
    let data = first.outcome.as_ref().unwrap();
    for ((t, c), reg) in data.checkpoints.iter().zip(&curve.regret[0]) {
        assert!((c - *t as f64 * res.j_star - reg).abs() < 1e-9 * c.max(1.0));
    }
}

#[test]
fn fixed_gain_regret_grows_linearly() {
    let learners = r#"
        [[learner]]
        kind = "fixed_k"
        gain = [[0.0, 0.0]]
    "#;
    let cfg = config(learners, "[2000, 8000, 32000]", 20, false);
    let res = run_experiment(&cfg, workers()).unwrap();
    let fits = res.fits(0).unwrap();
    assert!((fits.exponent.beta - 1.0).abs() < 0.05, "beta {}", fits.exponent.beta);
    let gap = policy_cost(&res.system, &Controller::zeros(1, 2)).unwrap() - res.j_star;
    let s = res.samples(0).unwrap();
    let per_step = mean(&s.per_t[2]) / 32000.0;
    assert!((per_step - gap).abs() < 0.05 * gap, "{per_step} vs {gap}");
}

#[test]
fn oracle_regret_is_centred_on_its_transient() {
    let learners = r#"
        [[learner]]
        kind = "oracle"
    "#;
    let horizon = 100_000;
    let res = run_experiment(&config(learners, "[25000, 50000, 100000]", 40, false), workers()).unwrap();
    let s = res.samples(0).unwrap();
    let (m, se) = (mean(&s.per_t[2]), stderr(&s.per_t[2]));
    let kstar = res.system.optimal_controller().unwrap();
    let expected = expected_cumulative_cost(&res.system, &kstar, &[horizon]).unwrap()[0] - horizon as f64 * res.j_star;
    assert!(expected < 0.0 && expected > -20.0);
    assert!((m - expected).abs() < 3.0 * se, "{m} ± {se} vs {expected}");
    assert!(m.abs() < 3.0 * se + expected.abs());

    // With the control variate every oracle run collapses onto the exact expectation.
    let res = run_experiment(&config(learners, "[25000, 50000, 100000]", 4, true), workers()).unwrap();
    for v in &res.samples(0).unwrap().per_t[2] {
        assert!((v - expected).abs() < 1e-6 * expected.abs().max(1.0));
    }
}

#[test]
fn control_variate_keeps_the_mean_and_cuts_the_spread() {
    let learners = r#"
        [[learner]]
        kind = "fixed_k"
        gain = [[-0.1, -0.3]]
    "#;
    let plain = run_experiment(&config(learners, "[5000, 10000, 20000]", 60, false), workers()).unwrap();
    let cv = run_experiment(&config(learners, "[5000, 10000, 20000]", 60, true), workers()).unwrap();
    let (p, c) = (plain.samples(0).unwrap(), cv.samples(0).unwrap());
    let (mp, sp) = (mean(&p.per_t[2]), stderr(&p.per_t[2]));
    let (mc, sc) = (mean(&c.per_t[2]), stderr(&c.per_t[2]));
    assert!(sc < 0.5 * sp, "stderr {sc} vs {sp}");
    assert!((mp - mc).abs() < 3.0 * (sp * sp + sc * sc).sqrt());
    // The CSV keeps the plain regret either way.
    let mut a = Vec::new();
    let mut b = Vec::new();
    plain.write_curves_csv(&mut a).unwrap();
    cv.write_curves_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn curves_round_trip_through_the_csv_reader() {
    let cfg = config(MIXED, "[500, 1000, 2000]", 4, false);
    let res = run_experiment(&cfg, workers()).unwrap();
    let mut buf = Vec::new();
    res.write_curves_csv(&mut buf).unwrap();
    let parsed = read_final_regrets(&buf[..]).unwrap();
    for (i, l) in cfg.learners.iter().enumerate() {
        let mine = res.samples(i).unwrap();
        let theirs = &parsed[&l.label()];
        assert_eq!(mine.t_grid, theirs.t_grid);
        for (x, y) in mine.per_t.iter().zip(&theirs.per_t) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&config(MIXED, "[500, 2000, 4000]", 3, true), workers()).unwrap();
    res.write_outputs(dir.path()).unwrap();
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".csv")), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".json")), "{names:?}");
}

/// Slope of `log(c·log²T)` on `log T` over a grid, by hand.
fn log_squared_slope(grid: &[usize]) -> f64 {
    let x: Vec<f64> = grid.iter().map(|&t| (t as f64).ln()).collect();
    let y: Vec<f64> = x.iter().map(|l| (3.0 * l * l).ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let num: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn exponent_of_exact_log_squared_curves() {
    let grid: Vec<usize> = (12..=20).map(|e| 1usize << e).collect();
    let curve: Vec<f64> = grid.iter().map(|&t| 3.0 * (t as f64).ln().powi(2)).collect();
    let samples = RegretSamples::new(grid.clone(), curve.iter().map(|&v| vec![v, v]).collect()).unwrap();
    let fit = fit_exponent(&samples, &mut rng(1)).unwrap();
    let oracle = log_squared_slope(&grid);
    assert!((fit.beta - oracle).abs() < 1e-12);
    assert_eq!(fit.ci, (fit.beta, fit.beta));
    // 2/log T between 2/log 2^20 and 2/log 2^12.
    assert!(fit.beta > 2.0 / ((1u64 << 20) as f64).ln());
    assert!(fit.beta < 2.0 / ((1u64 << 12) as f64).ln());
    assert!((fit.beta - 0.18).abs() < 0.01, "beta {}", fit.beta);
}

#[test]
fn model_fits_on_exact_curves() {
    let grid: Vec<usize> = (12..=20).step_by(2).map(|e| 1usize << e).collect();
    let log_sq: Vec<f64> = grid.iter().map(|&t| 2.5 * (t as f64).ln().powi(2) + 7.0).collect();
    let f = fit_log_squared(&grid, &log_sq).unwrap();
    assert!((f.c - 2.5).abs() < 1e-9 && (f.c0 - 7.0).abs() < 1e-6 && (f.r2 - 1.0).abs() < 1e-12);
    assert!(fit_sqrt(&grid, &log_sq).unwrap().r2 < f.r2);

    let root: Vec<f64> = grid.iter().map(|&t| (t as f64).sqrt()).collect();
    let s = fit_sqrt(&grid, &root).unwrap();
    let l = fit_log_squared(&grid, &root).unwrap();
    assert!((s.r2 - 1.0).abs() < 1e-12);
    assert!(l.r2 < 0.95, "log² R² on a √T curve: {}", l.r2);
}

#[test]
fn bootstrap_interval_covers_the_point_estimate() {
    let mut noise = RngStream::new(3, 3);
    let grid = vec![1000, 4000, 16000];
    let per_t: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| (0..50).map(|_| (t as f64).sqrt() * (1.0 + 0.2 * noise.gaussian())).collect())
        .collect();
    let fit = fit_exponent(&RegretSamples::new(grid, per_t).unwrap(), &mut rng(2)).unwrap();
    assert!(fit.ci.0 <= fit.beta && fit.beta <= fit.ci.1);
    assert!((fit.beta - 0.5).abs() < 0.05);
    assert!(fit.shift.is_none());
}
