use lqr_core::control::{Controller, LqrSystem};
use lqr_core::learners::FixedGain;
use lqr_core::rng::{stream_id, Purpose, RngStream};
use lqr_core::simulation::{
    instantaneous_cost, rollout, rollout_with, step, CostCheckpoints, GaussianNoise, NoiseSource,
    DETERMINISTIC_SIGMA,
};
use lqr_core::LqrError;
use nalgebra::{DMatrix, DVector};

fn system(sigma: f64) -> LqrSystem {
    LqrSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        sigma,
    )
    .unwrap()
}

fn gain() -> Controller {
    Controller::new(DMatrix::from_row_slice(1, 2, &[-0.2, -0.3]))
}

#[test]
fn same_stream_same_trajectory() {
    let sys = system(1.3);
    let run = |seed| {
        rollout(&sys, &mut FixedGain::new(gain()), 500, RngStream::new(seed, 3), Some(&[1.0, -1.0])).unwrap()
    };
    assert_eq!(run(8), run(8));
    assert_ne!(run(8), run(9));
}

#[test]
fn trajectory_obeys_the_dynamics_exactly() {
    let sys = system(0.6);
    let traj = rollout(&sys, &mut FixedGain::new(gain()), 200, RngStream::new(1, 1), None).unwrap();
    assert_eq!(traj.len(), 200);
    for t in 0..traj.len() {
        let x = DVector::from_column_slice(traj.state(t));
        let u = DVector::from_column_slice(traj.action(t));
        let w = DVector::from_column_slice(traj.noise(t));
        let next = &sys.a * &x + &sys.b * &u + w;
        assert_eq!(next.as_slice(), traj.state(t + 1));
        assert_eq!(u, &gain().gain * &x);
        let c = instantaneous_cost(&sys, x.as_slice(), u.as_slice()).unwrap();
        assert!((traj.costs()[t] - c).abs() <= 1e-15 * c.max(1.0));
    }
}

#[test]
fn step_draws_the_same_noise_as_rollout() {
    let sys = system(0.9);
    let traj = rollout(&sys, &mut FixedGain::new(Controller::zeros(1, 2)), 3, RngStream::new(4, 4), None).unwrap();
    let mut rng = RngStream::new(4, 4);
    let mut x = DVector::zeros(2);
    for t in 0..3 {
        x = step(&sys, x.as_slice(), &[0.0], &mut rng).unwrap();
        assert_eq!(x.as_slice(), traj.state(t + 1));
    }
}

#[test]
fn noise_has_the_requested_moments() {
    let sigma = 2.5;
    let mut noise = GaussianNoise::new(RngStream::new(2, 2), sigma);
    let n = 200_000;
    let mut w = [0.0; 2];
    let (mut sum, mut sq, mut cross) = ([0.0; 2], [0.0; 2], 0.0);
    for t in 0..n {
        noise.sample(t, &mut w);
        for i in 0..2 {
            sum[i] += w[i];
            sq[i] += w[i] * w[i];
        }
        cross += w[0] * w[1];
    }
    let nf = n as f64;
    for i in 0..2 {
        // 5 standard errors of the mean and of the variance estimate.
        assert!((sum[i] / nf).abs() < 5.0 * sigma / nf.sqrt());
        let var = sq[i] / nf;
        assert!((var - sigma * sigma).abs() < 5.0 * sigma * sigma * (2.0 / nf).sqrt());
    }
    assert!((cross / nf).abs() < 5.0 * sigma * sigma / nf.sqrt());
}

#[test]
fn deterministic_noise_is_exactly_zero() {
    let sys = system(DETERMINISTIC_SIGMA);
    let traj = rollout(&sys, &mut FixedGain::new(gain()), 100, RngStream::new(3, 3), None).unwrap();
    assert!(traj.states().all(|x| x.iter().all(|&v| v == 0.0)));
    assert_eq!(traj.total_cost(), 0.0);
}

#[test]
fn checkpoints_are_prefix_sums_of_the_costs() {
    let sys = system(1.0);
    let times = [0, 1, 17, 100, 400];
    let mut sink = CostCheckpoints::new(&times);
    let mut noise = GaussianNoise::new(RngStream::new(5, 5), sys.sigma);
    rollout_with(&sys, &mut FixedGain::new(gain()), 400, &mut noise, &[0.0, 0.0], &mut sink).unwrap();
    let traj = rollout(&sys, &mut FixedGain::new(gain()), 400, RngStream::new(5, 5), None).unwrap();
    let mut prefix = vec![0.0];
    for c in traj.costs() {
        prefix.push(prefix.last().unwrap() + c);
    }
    assert_eq!(sink.snapshots.len(), times.len());
    for (&(t, c), &want) in sink.snapshots.iter().zip(&times) {
        assert_eq!(t, want);
        assert!((c - prefix[t]).abs() <= 1e-12 * prefix[t].max(1.0));
    }
    assert!((sink.total() - prefix[400]).abs() <= 1e-12 * prefix[400]);
}

#[test]
fn divergence_is_reported_as_overflow() {
    let sys = LqrSystem::scalar(3.0, 1.0, 1.0).unwrap();
    let err = rollout(&sys, &mut FixedGain::new(Controller::zeros(1, 1)), 10_000, RngStream::new(1, 1), None).unwrap_err();
    assert!(matches!(err, LqrError::NumericOverflow { .. }));
}

#[test]
fn dimension_mismatch_is_reported() {
    let sys = system(1.0);
    let res = rollout(&sys, &mut FixedGain::new(gain()), 5, RngStream::new(1, 1), Some(&[0.0]));
    assert!(matches!(res, Err(LqrError::DimensionMismatch(_))));
    assert!(step(&sys, &[0.0, 0.0], &[0.0, 0.0], &mut RngStream::new(1, 1)).is_err());
}

#[test]
fn trial_streams_are_disjoint() {
    let mut seen = std::collections::BTreeSet::new();
    for horizon in [1u64, 1000, 1 << 20] {
        for trial in 0..64 {
            for purpose in [Purpose::SystemNoise, Purpose::ActionNoise, Purpose::Exploration, Purpose::Sign] {
                assert!(seen.insert(stream_id(horizon, trial, purpose).unwrap()));
            }
        }
    }
    let mut a = RngStream::for_trial(1, 1000, 3, Purpose::SystemNoise).unwrap();
    let mut b = RngStream::for_trial(1, 1000, 3, Purpose::ActionNoise).unwrap();
    assert_ne!(a.next_u64(), b.next_u64());
}
