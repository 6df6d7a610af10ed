mod common;

use lqr_core::estimation::{batch_ridge, RlsEstimator};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recursive_equals_batch(seed in 0u64..100_000, d in 1usize..5, m in 1usize..5, n in 0usize..200, lambda in 0.01f64..10.0) {
        let mut rng = rng(seed);
        let mut est = RlsEstimator::new(d, m, lambda).unwrap();
        let (mut zs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let z = DVector::from_fn(m, |_, _| rng.gaussian());
            let y = DVector::from_fn(d, |_, _| rng.gaussian());
            est.update(z.as_slice(), y.as_slice()).unwrap();
            zs.push(z);
            ys.push(y);
        }
        let batch = if n == 0 { DMatrix::zeros(d, m) } else { batch_ridge(&zs, &ys, lambda) };
        prop_assert!((est.estimate() - batch).amax() <= 1e-10);
        prop_assert_eq!(est.samples(), n);
    }

    #[test]
    fn log_det_grows_with_data(seed in 0u64..100_000, m in 1usize..5) {
        let mut rng = rng(seed);
        let mut est = RlsEstimator::new(2, m, 0.5).unwrap();
        let mut prev = est.log_det_ratio();
        prop_assert!(prev.abs() < 1e-12);
        for _ in 0..50 {
            let z: Vec<f64> = (0..m).map(|_| rng.gaussian()).collect();
            est.update(&z, &[0.0, 0.0]).unwrap();
            let cur = est.log_det_ratio();
            prop_assert!(cur >= prev - 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn priming_identifies_the_prior_exactly(seed in 0u64..100_000, d in 1usize..5, m in 1usize..5) {
        let mut rng = rng(seed);
        let theta = gaussian_matrix(&mut rng, d, m);
        let lambda = 1e-12;
        let mut est = RlsEstimator::new(d, m, lambda).unwrap();
        est.prime(&theta, 1.0).unwrap();
        prop_assert!((est.estimate() - &theta).amax() <= 1e-10 * theta.amax().max(1.0));
        // Noiseless data generated by the same matrix leaves the estimate in place.
        for _ in 0..20 {
            let z = DVector::from_fn(m, |_, _| rng.gaussian());
            let y = &theta * &z;
            est.update(z.as_slice(), y.as_slice()).unwrap();
        }
        prop_assert!((est.estimate() - &theta).amax() <= 1e-10 * theta.amax().max(1.0));
        prop_assert_eq!(est.samples(), 20);
    }
}

#[test]
fn prime_rejects_bad_input() {
    let mut est = RlsEstimator::new(2, 2, 1.0).unwrap();
    assert!(est.prime(&DMatrix::zeros(2, 3), 1.0).is_err());
    assert!(est.prime(&DMatrix::zeros(2, 2), 0.0).is_err());
    assert!(est.prime(&DMatrix::zeros(2, 2), f64::NAN).is_err());
}

#[test]
fn prime_with_no_data_shrinks_toward_zero() {
    let theta = DMatrix::from_row_slice(1, 2, &[2.0, -4.0]);
    let mut est = RlsEstimator::new(1, 2, 1.0).unwrap();
    est.prime(&theta, 3.0).unwrap();
    assert!((est.estimate() - theta * 0.75).amax() < 1e-14);
}

#[test]
fn confidence_bound_covers_the_truth() {
    // tr(ΔᵀVΔ) ≤ bound with probability ≥ 1 − δ; δ = 0.1 over 200 independent runs.
    let theta = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
    let sigma = 1.0;
    let mut covered = 0;
    for seed in 0..200u64 {
        let mut rng = rng(1000 + seed);
        let mut est = RlsEstimator::new(2, 2, 1.0).unwrap();
        for _ in 0..300 {
            let z = DVector::from_fn(2, |_, _| rng.gaussian());
            let y = &theta * &z + DVector::from_fn(2, |_, _| sigma * rng.gaussian());
            est.update(z.as_slice(), y.as_slice()).unwrap();
        }
        let weighted = {
            let delta = (&theta - est.estimate()).transpose();
            (delta.transpose() * est.gram() * &delta).trace()
        };
        if weighted <= est.confidence_bound(0.1, sigma, 2, theta.norm_squared()) {
            covered += 1;
        }
    }
    assert!(covered >= 180, "covered {covered} / 200");
}

#[test]
fn error_shrinks_with_more_data() {
    let theta = DMatrix::from_row_slice(1, 1, &[0.7]);
    let mut errs = Vec::new();
    for seed in 0..50u64 {
        let mut rng = rng(5000 + seed);
        let mut est = RlsEstimator::new(1, 1, 1.0).unwrap();
        let mut at = [0.0; 2];
        for t in 1..=4000 {
            let z = rng.gaussian();
            est.update(&[z], &[0.7 * z + rng.gaussian()]).unwrap();
            if t == 250 {
                at[0] = (est.estimate() - &theta).amax();
            }
        }
        at[1] = (est.estimate() - &theta).amax();
        errs.push(at);
    }
    let mut early: Vec<f64> = errs.iter().map(|e| e[0]).collect();
    let mut late: Vec<f64> = errs.iter().map(|e| e[1]).collect();
    // 16× the data, so a quarter of the error up to sampling noise.
    let ratio = median(&mut late) / median(&mut early);
    assert!(ratio < 0.45, "ratio {ratio}");
}
