//! Learner for an unknown action matrix with known `A⋆`.
//!
//! The warm-up plays `K₀x_t + η_t` with `η_t ~ N(0, σ²I)` drawn from a
//! dedicated stream. At every phase start the learner estimates `B` from
//! `x_{s+1} − A⋆x_s ≈ B u_s` and synthesizes a gain; the warm-up ends at the
//! first phase `n_s` whose gain passes the non-degeneracy test
//! `σ_min(K)² ≥ (3/2) μ_{n_s}`. From there on it behaves like the unknown-`A`
//! learner, including the permanent fallback to `K₀`.
//!
//! One `η_t` is drawn at every step whether or not it is played, so the
//! virtual actions `K₀x_t + η_t` can be replayed from the stream address.

use nalgebra::DMatrix;

use super::config::DerivedParams;
use super::{EstimateHook, MainLoop};
use crate::control::{synthesize, Controller};
use crate::error::{LqrError, Result};
use crate::estimation::RlsEstimator;
use crate::linalg::{mat_vec_into, min_singular_value};
use crate::rng::RngStream;
use crate::simulation::{AbortReason, Policy, PolicyReport};

pub struct AlgorithmB {
    params: DerivedParams,
    a_star: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sigma: f64,
    estimator: RlsEstimator,
    main: MainLoop,
    action_noise: RngStream,
    eta: Vec<f64>,
    /// `Some(n_s)` once the noisy warm-up has ended.
    warmup_end: Option<usize>,
    next_phase: usize,
    hook: Option<EstimateHook>,
    report: PolicyReport,
    y_buf: Vec<f64>,
}

impl AlgorithmB {
    pub fn new(
        params: DerivedParams,
        k0: Controller,
        a_star: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma: f64,
        action_noise: RngStream,
    ) -> Result<Self> {
        let d = a_star.nrows();
        let k = k0.gain.nrows();
        if k0.gain.ncols() != d || r.shape() != (k, k) || q.shape() != (d, d) {
            return Err(LqrError::DimensionMismatch(
                "K0, A, Q and R disagree on dimensions".into(),
            ));
        }
        if params.mu0.is_none() {
            return Err(LqrError::Config(
                "noisy warm-up learner needs mu0 in its parameters".into(),
            ));
        }
        let estimator = RlsEstimator::new(d, k, params.lambda)?;
        Ok(Self {
            main: MainLoop::new(k0, params.x_b, params.kappa),
            params,
            a_star,
            q,
            r,
            sigma,
            estimator,
            action_noise,
            eta: vec![0.0; k],
            warmup_end: None,
            next_phase: 0,
            hook: None,
            report: PolicyReport::default(),
            y_buf: vec![0.0; d],
        })
    }

    pub fn set_estimate_hook(&mut self, hook: EstimateHook) {
        self.hook = Some(hook);
    }

    pub fn estimator_mut(&mut self) -> &mut RlsEstimator {
        &mut self.estimator
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    /// Number of warm-up phases `n_s` (`n_T + 1` if the test never passed).
    pub fn warmup_phases(&self) -> usize {
        self.warmup_end.unwrap_or(self.params.n_t + 1)
    }

    /// Smallest squared singular value of a gain; equals `λ_min(KKᵀ)` for `k ≤ d`.
    pub fn non_degeneracy(k: &Controller) -> f64 {
        let s = min_singular_value(&k.gain);
        s * s
    }

    fn estimate_gain(&mut self, t: usize, phase: usize) -> Result<Controller> {
        let mut b_hat = self.estimator.estimate();
        if let Some(hook) = self.hook.as_mut() {
            b_hat = hook(phase, b_hat);
        }
        self.report.estimates.push((t, b_hat.clone()));
        synthesize(&self.a_star, &b_hat, &self.q, &self.r)
    }

    fn start_phase(&mut self, t: usize, phase: usize) {
        match self.warmup_end {
            None => {
                let mu = self.params.mu(phase).expect("mu0 checked at construction");
                // A failed synthesis during warm-up only means the test did not pass.
                if let Ok(k) = self.estimate_gain(t, phase) {
                    if Self::non_degeneracy(&k) >= 1.5 * mu {
                        self.warmup_end = Some(phase);
                        self.main.commit(phase, t, k, &mut self.report);
                    }
                }
            }
            Some(_) => match self.estimate_gain(t, phase) {
                Ok(k) => self.main.commit(phase, t, k, &mut self.report),
                Err(_) => self.main.abort(t, AbortReason::SynthesisFailure),
            },
        }
    }
}

impl Policy for AlgorithmB {
    fn act(&mut self, t: usize, x: &[f64], u: &mut [f64]) -> Result<()> {
        self.action_noise.fill_gaussian(self.sigma, &mut self.eta);
        if !self.main.aborted()
            && self.next_phase <= self.params.n_t
            && t == self.params.tau(self.next_phase)
        {
            self.start_phase(t, self.next_phase);
            self.next_phase += 1;
        }
        if self.warmup_end.is_none() && !self.main.aborted() {
            self.main.play_safe(x, u);
            for (ui, e) in u.iter_mut().zip(&self.eta) {
                *ui += e;
            }
            return Ok(());
        }
        self.main.play(t, x, u);
        Ok(())
    }

    fn observe(&mut self, _t: usize, _x: &[f64], u: &[f64], next: &[f64]) -> Result<()> {
        if self.main.aborted() {
            return Ok(());
        }
        // y = x_{t+1} − A⋆x_t
        mat_vec_into(&self.a_star, _x, &mut self.y_buf);
        for (y, n) in self.y_buf.iter_mut().zip(next) {
            *y = n - *y;
        }
        self.estimator.update(u, &self.y_buf)
    }

    fn report(&self) -> PolicyReport {
        let mut r = self.report.clone();
        r.abort = self.main.abort_record();
        r.warmup_phases = Some(self.warmup_phases());
        r
    }
}
