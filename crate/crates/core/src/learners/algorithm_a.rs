//! Learner for an unknown state transition matrix with known `B⋆`.
//!
//! Plays the safe gain `K₀` during a warm-up of `τ₀ − 1` steps, then runs
//! phases starting at `τ_i = τ₀ 4^i`. Each phase re-estimates `A` by ridge
//! regression on `x_{s+1} − B⋆u_s ≈ A x_s` and plays the certainty-equivalent
//! gain for the whole phase, unless the state or the gain leaves its bound,
//! in which case the learner falls back to `K₀` for the rest of the run.

use nalgebra::DMatrix;

use super::config::DerivedParams;
use super::{EstimateHook, MainLoop};
use crate::control::{synthesize, Controller};
use crate::error::{LqrError, Result};
use crate::estimation::RlsEstimator;
use crate::linalg::mat_vec_into;
use crate::simulation::{AbortReason, Policy, PolicyReport};

pub struct AlgorithmA {
    params: DerivedParams,
    b_star: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    estimator: RlsEstimator,
    main: MainLoop,
    next_phase: usize,
    hook: Option<EstimateHook>,
    report: PolicyReport,
    y_buf: Vec<f64>,
}

impl AlgorithmA {
    pub fn new(
        params: DerivedParams,
        k0: Controller,
        b_star: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let d = b_star.nrows();
        if k0.gain.shape() != (b_star.ncols(), d) || q.shape() != (d, d) {
            return Err(LqrError::DimensionMismatch(
                "K0, B and Q disagree on dimensions".into(),
            ));
        }
        let estimator = RlsEstimator::new(d, d, params.lambda)?;
        Ok(Self {
            main: MainLoop::new(k0, params.x_b, params.kappa),
            params,
            b_star,
            q,
            r,
            estimator,
            next_phase: 0,
            hook: None,
            report: PolicyReport::default(),
            y_buf: vec![0.0; d],
        })
    }

    /// Replace every phase estimate by `hook(phase, estimate)`; a test seam for poisoned estimates.
    pub fn set_estimate_hook(&mut self, hook: EstimateHook) {
        self.hook = Some(hook);
    }

    pub fn estimator(&self) -> &RlsEstimator {
        &self.estimator
    }

    pub fn estimator_mut(&mut self) -> &mut RlsEstimator {
        &mut self.estimator
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    fn start_phase(&mut self, t: usize, phase: usize) {
        let mut a_hat = self.estimator.estimate();
        if let Some(hook) = self.hook.as_mut() {
            a_hat = hook(phase, a_hat);
        }
        self.report.estimates.push((t, a_hat.clone()));
        match synthesize(&a_hat, &self.b_star, &self.q, &self.r) {
            Ok(k) => self.main.commit(phase, t, k, &mut self.report),
            Err(_) => self.main.abort(t, AbortReason::SynthesisFailure),
        }
    }
}

impl Policy for AlgorithmA {
    fn act(&mut self, t: usize, x: &[f64], u: &mut [f64]) -> Result<()> {
        if !self.main.aborted()
            && self.next_phase <= self.params.n_t
            && t == self.params.tau(self.next_phase)
        {
            self.start_phase(t, self.next_phase);
            self.next_phase += 1;
        }
        if t < self.params.tau0 {
            self.main.play_safe(x, u);
            return Ok(());
        }
        self.main.play(t, x, u);
        Ok(())
    }

    fn observe(&mut self, _t: usize, x: &[f64], u: &[f64], next: &[f64]) -> Result<()> {
        if self.main.aborted() {
            return Ok(());
        }
        // y = x_{t+1} − B⋆u_t
        mat_vec_into(&self.b_star, u, &mut self.y_buf);
        for (y, n) in self.y_buf.iter_mut().zip(next) {
            *y = n - *y;
        }
        self.estimator.update(x, &self.y_buf)
    }

    fn report(&self) -> PolicyReport {
        let mut r = self.report.clone();
        r.abort = self.main.abort_record();
        r
    }
}
