//! Seeded rollouts of an LQR system under an online policy.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::LqrSystem;
use crate::error::{LqrError, Result};
use crate::linalg::{mat_vec_add, mat_vec_into, quad_form, vector_norm_sq};
use crate::rng::RngStream;

/// Noise scales at or below this value switch the generator to exact zeros.
pub const DETERMINISTIC_SIGMA: f64 = 1e-300;
/// States with norm above this abort the rollout with `NumericOverflow`.
pub const OVERFLOW_GUARD: f64 = 1e150;

/// Why a learner fell back to its safe controller for good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// `‖x_t‖² > x_b`
    StateBound,
    /// `‖K‖ > κ`
    GainBound,
    /// The Riccati solve on the estimated model failed.
    SynthesisFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub t: usize,
    pub reason: AbortReason,
}

/// A gain a learner committed to at the start of a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGain {
    pub phase: usize,
    pub start: usize,
    pub gain: DMatrix<f64>,
}

/// What a learner reports about its own run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyReport {
    pub abort: Option<AbortRecord>,
    /// Index of the phase where the noisy warm-up ended, if the learner has one.
    pub warmup_phases: Option<usize>,
    /// Gains used in the main loop, in order.
    pub phase_gains: Vec<PhaseGain>,
    /// Estimates at each phase boundary `(t, Θ̂)`.
    pub estimates: Vec<(usize, DMatrix<f64>)>,
}

/// An online controller. Time `t` is 1-based: `act` sees `x_t` and writes `u_t`,
/// `observe` then sees the transition to `x_{t+1}`.
pub trait Policy {
    fn act(&mut self, t: usize, x: &[f64], u: &mut [f64]) -> Result<()>;

    fn observe(&mut self, _t: usize, _x: &[f64], _u: &[f64], _next: &[f64]) -> Result<()> {
        Ok(())
    }

    fn report(&self) -> PolicyReport {
        PolicyReport::default()
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, t: usize, x: &[f64], u: &mut [f64]) -> Result<()> {
        (**self).act(t, x, u)
    }

    fn observe(&mut self, t: usize, x: &[f64], u: &[f64], next: &[f64]) -> Result<()> {
        (**self).observe(t, x, u, next)
    }

    fn report(&self) -> PolicyReport {
        (**self).report()
    }
}

/// Source of the additive system noise.
pub trait NoiseSource {
    fn sample(&mut self, t: usize, out: &mut [f64]);
}

/// i.i.d. `N(0, σ² I)` noise from a counter-based stream.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: RngStream,
    sigma: f64,
}

impl GaussianNoise {
    pub fn new(rng: RngStream, sigma: f64) -> Self {
        Self { rng, sigma }
    }
}

impl NoiseSource for GaussianNoise {
    fn sample(&mut self, _t: usize, out: &mut [f64]) {
        if self.sigma <= DETERMINISTIC_SIGMA {
            // Keep the stream position identical to the stochastic case.
            for o in out.iter_mut() {
                let _ = self.rng.gaussian();
                *o = 0.0;
            }
        } else {
            self.rng.fill_gaussian(self.sigma, out);
        }
    }
}

/// Receives every transition of a rollout.
pub trait StepSink {
    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, t: usize, x: &[f64], u: &[f64], w: &[f64], cost: f64, next: &[f64]);
}

/// Sink that drops everything.
pub struct NullSink;

impl StepSink for NullSink {
    fn record(&mut self, _: usize, _: &[f64], _: &[f64], _: &[f64], _: f64, _: &[f64]) {}
}

/// Running sum of costs with snapshots at chosen times.
#[derive(Debug, Clone)]
pub struct CostCheckpoints {
    times: Vec<usize>,
    next: usize,
    total: f64,
    pub snapshots: Vec<(usize, f64)>,
}

impl CostCheckpoints {
    /// `times` must be sorted; time 0 is recorded immediately with cost 0.
    pub fn new(times: &[usize]) -> Self {
        let mut cp = Self {
            times: times.to_vec(),
            next: 0,
            total: 0.0,
            snapshots: Vec::with_capacity(times.len()),
        };
        while cp.next < cp.times.len() && cp.times[cp.next] == 0 {
            cp.snapshots.push((0, 0.0));
            cp.next += 1;
        }
        cp
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

impl StepSink for CostCheckpoints {
    fn record(&mut self, t: usize, _: &[f64], _: &[f64], _: &[f64], cost: f64, _: &[f64]) {
        self.total += cost;
        while self.next < self.times.len() && self.times[self.next] == t {
            self.snapshots.push((t, self.total));
            self.next += 1;
        }
    }
}

/// Full record of a rollout, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    d: usize,
    k: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    noises: Vec<f64>,
    costs: Vec<f64>,
    pub aborted_at: Option<AbortRecord>,
}

impl Trajectory {
    pub fn new(d: usize, k: usize, x1: &[f64]) -> Self {
        Self {
            d,
            k,
            states: x1.to_vec(),
            actions: Vec::new(),
            noises: Vec::new(),
            costs: Vec::new(),
            aborted_at: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn action_dim(&self) -> usize {
        self.k
    }

    /// Number of completed steps.
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// `x_{i+1}` (index 0 is the initial state, index `len()` the final one).
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.d..(i + 1) * self.d]
    }

    /// `u_{i+1}`
    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.k..(i + 1) * self.k]
    }

    /// Realized `w_{i+1}`.
    pub fn noise(&self, i: usize) -> &[f64] {
        &self.noises[i * self.d..(i + 1) * self.d]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.d)
    }

    pub fn actions(&self) -> impl Iterator<Item = &[f64]> {
        self.actions.chunks_exact(self.k)
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// CSV with columns `t, x0..x{d-1}, u0..u{k-1}, cost`; the final state row has empty action and cost.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.d).map(|i| format!("x{i}")));
        header.extend((0..self.k).map(|i| format!("u{i}")));
        header.push("cost".into());
        w.write_record(&header)?;
        for i in 0..=self.len() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(self.state(i).iter().map(|v| v.to_string()));
            if i < self.len() {
                row.extend(self.action(i).iter().map(|v| v.to_string()));
                row.push(self.costs[i].to_string());
            } else {
                row.extend(std::iter::repeat_n(String::new(), self.k + 1));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl StepSink for Trajectory {
    fn record(&mut self, _t: usize, _x: &[f64], u: &[f64], w: &[f64], cost: f64, next: &[f64]) {
        self.actions.extend_from_slice(u);
        self.noises.extend_from_slice(w);
        self.costs.push(cost);
        self.states.extend_from_slice(next);
    }
}

/// Result of a rollout that did not fail.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub final_state: DVector<f64>,
    pub report: PolicyReport,
}

/// `x' = A x + B u + w` with `w ~ N(0, σ² I)` drawn from `rng` (exactly d draws).
pub fn step(sys: &LqrSystem, x: &[f64], u: &[f64], rng: &mut RngStream) -> Result<DVector<f64>> {
    check_dims(sys, x, u)?;
    let d = sys.state_dim();
    let mut w = vec![0.0; d];
    let mut noise = GaussianNoise::new(rng.clone(), sys.sigma);
    noise.sample(0, &mut w);
    *rng = noise.rng;
    let mut next = vec![0.0; d];
    transition_into(sys, x, u, &w, &mut next);
    Ok(DVector::from_vec(next))
}

/// `xᵀQx + uᵀRu`.
pub fn instantaneous_cost(sys: &LqrSystem, x: &[f64], u: &[f64]) -> Result<f64> {
    check_dims(sys, x, u)?;
    Ok(quad_form(&sys.q, x) + quad_form(&sys.r, u))
}

fn check_dims(sys: &LqrSystem, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != sys.state_dim() || u.len() != sys.action_dim() {
        return Err(LqrError::DimensionMismatch(format!(
            "system expects x in R^{}, u in R^{}; got {} and {}",
            sys.state_dim(),
            sys.action_dim(),
            x.len(),
            u.len()
        )));
    }
    Ok(())
}

#[inline]
fn transition_into(sys: &LqrSystem, x: &[f64], u: &[f64], w: &[f64], next: &mut [f64]) {
    mat_vec_into(&sys.a, x, next);
    mat_vec_add(&sys.b, u, next);
    for (n, wi) in next.iter_mut().zip(w) {
        *n += wi;
    }
}

/// Run `horizon` steps from `x1`, streaming every transition into `sink`.
pub fn rollout_with<P, N, S>(
    sys: &LqrSystem,
    policy: &mut P,
    horizon: usize,
    noise: &mut N,
    x1: &[f64],
    sink: &mut S,
) -> Result<RolloutOutcome>
where
    P: Policy + ?Sized,
    N: NoiseSource + ?Sized,
    S: StepSink + ?Sized,
{
    let d = sys.state_dim();
    let k = sys.action_dim();
    if x1.len() != d {
        return Err(LqrError::DimensionMismatch(format!(
            "initial state has length {}, expected {d}",
            x1.len()
        )));
    }
    let mut x = x1.to_vec();
    let mut u = vec![0.0; k];
    let mut w = vec![0.0; d];
    let mut next = vec![0.0; d];
    let guard_sq = OVERFLOW_GUARD * OVERFLOW_GUARD;
    for t in 1..=horizon {
        if !(vector_norm_sq(&x) <= guard_sq) {
            return Err(LqrError::NumericOverflow { t });
        }
        policy.act(t, &x, &mut u)?;
        noise.sample(t, &mut w);
        transition_into(sys, &x, &u, &w, &mut next);
        let cost = quad_form(&sys.q, &x) + quad_form(&sys.r, &u);
        policy.observe(t, &x, &u, &next)?;
        sink.record(t, &x, &u, &w, cost, &next);
        std::mem::swap(&mut x, &mut next);
    }
    if !(vector_norm_sq(&x) <= guard_sq) {
        return Err(LqrError::NumericOverflow { t: horizon + 1 });
    }
    Ok(RolloutOutcome {
        final_state: DVector::from_vec(x),
        report: policy.report(),
    })
}

/// Full trajectory of `horizon` steps with Gaussian system noise from `rng`.
pub fn rollout<P: Policy + ?Sized>(
    sys: &LqrSystem,
    policy: &mut P,
    horizon: usize,
    rng: RngStream,
    x1: Option<&[f64]>,
) -> Result<Trajectory> {
    let d = sys.state_dim();
    let zero = vec![0.0; d];
    let x1 = x1.unwrap_or(&zero);
    let mut traj = Trajectory::new(d, sys.action_dim(), x1);
    let mut noise = GaussianNoise::new(rng, sys.sigma);
    let outcome = rollout_with(sys, policy, horizon, &mut noise, x1, &mut traj)?;
    traj.aborted_at = outcome.report.abort;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Controller;
    use crate::learners::baselines::FixedGain;
    use approx::assert_relative_eq;

    fn identity_system(sigma: f64) -> LqrSystem {
        LqrSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            sigma,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_step() {
        let sys = identity_system(DETERMINISTIC_SIGMA);
        let mut rng = RngStream::new(0, 0);
        let next = step(&sys, &[1.0, 1.0], &[1.0, 0.0], &mut rng).unwrap();
        assert_eq!(next.as_slice(), &[2.0, 1.0]);
        let zero = step(&sys, &[0.0, 0.0], &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(zero.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn step_advances_stream_by_d_draws() {
        let sys = identity_system(1.0);
        let mut rng = RngStream::new(5, 1);
        let next = step(&sys, &[0.0, 0.0], &[0.0, 0.0], &mut rng).unwrap();
        let mut replay = RngStream::new(5, 1);
        let w0 = replay.gaussian();
        let w1 = replay.gaussian();
        assert_eq!(next.as_slice(), &[w0, w1]);
        assert_eq!(rng.gaussian().to_bits(), replay.gaussian().to_bits());
    }

    #[test]
    fn step_rejects_bad_dims() {
        let sys = identity_system(1.0);
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            step(&sys, &[1.0], &[0.0, 0.0], &mut rng),
            Err(LqrError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let sys = identity_system(1.0);
        assert_eq!(instantaneous_cost(&sys, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(instantaneous_cost(&sys, &[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        let scalar = LqrSystem::scalar(0.4, 0.1, 1.0).unwrap();
        assert_relative_eq!(instantaneous_cost(&scalar, &[2.0], &[-3.0]).unwrap(), 13.0);
    }

    #[test]
    fn empty_rollout_keeps_initial_state() {
        let sys = identity_system(1.0);
        let mut pol = FixedGain::new(Controller::zeros(2, 2));
        let traj = rollout(&sys, &mut pol, 0, RngStream::new(0, 0), Some(&[1.0, -1.0])).unwrap();
        assert_eq!(traj.len(), 0);
        assert_eq!(traj.state(0), &[1.0, -1.0]);
        assert_eq!(traj.actions().count(), 0);
    }

    #[test]
    fn deterministic_rollout_from_zero_stays_at_zero() {
        let mut sys = identity_system(DETERMINISTIC_SIGMA);
        sys.a *= 0.5;
        let mut pol = FixedGain::new(Controller::new(DMatrix::identity(2, 2) * -0.1));
        let traj = rollout(&sys, &mut pol, 50, RngStream::new(3, 3), None).unwrap();
        assert!(traj.states().all(|x| x.iter().all(|v| *v == 0.0)));
        assert!(traj.costs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn trajectory_shape_and_costs() {
        let mut sys = identity_system(1.0);
        sys.a *= 0.3;
        let mut pol = FixedGain::new(Controller::new(DMatrix::identity(2, 2) * -0.2));
        let traj = rollout(&sys, &mut pol, 25, RngStream::new(1, 2), None).unwrap();
        assert_eq!(traj.len(), 25);
        assert_eq!(traj.states().count(), 26);
        assert_eq!(traj.actions().count(), 25);
        for i in 0..traj.len() {
            let c = instantaneous_cost(&sys, traj.state(i), traj.action(i)).unwrap();
            assert_eq!(c, traj.costs()[i]);
        }
    }

    #[test]
    fn unstable_loop_hits_overflow_guard() {
        let mut sys = identity_system(1.0);
        sys.a *= 3.0;
        let mut pol = FixedGain::new(Controller::zeros(2, 2));
        let err = rollout(&sys, &mut pol, 10_000, RngStream::new(0, 0), None).unwrap_err();
        assert!(matches!(err, LqrError::NumericOverflow { .. }));
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let sys = identity_system(1.0);
        let mut pol = FixedGain::new(Controller::new(DMatrix::identity(2, 2) * -0.5));
        let traj = rollout(&sys, &mut pol, 3, RngStream::new(0, 0), None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x0,x1,u0,u1,cost");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",,,"));
    }

    #[test]
    fn checkpoints_accumulate() {
        let mut cp = CostCheckpoints::new(&[0, 2, 3]);
        for (t, c) in [(1, 1.0), (2, 2.0), (3, 4.0)] {
            cp.record(t, &[], &[], &[], c, &[]);
        }
        assert_eq!(cp.snapshots, vec![(0, 0.0), (2, 3.0), (3, 7.0)]);
    }
}
