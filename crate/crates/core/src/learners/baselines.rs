//! Reference policies: a fixed gain, the optimal gain, and certainty
//! equivalence with decaying Gaussian exploration.

use nalgebra::DMatrix;

use crate::control::{synthesize, Controller, LqrSystem};
use crate::error::{LqrError, Result};
use crate::estimation::RlsEstimator;
use crate::linalg::{mat_vec_into, op_norm, spectral_radius, vector_norm_sq};
use crate::rng::RngStream;
use crate::simulation::{PhaseGain, Policy, PolicyReport};

/// `u = K x` forever.
#[derive(Debug, Clone)]
pub struct FixedGain {
    k: Controller,
}

impl FixedGain {
    pub fn new(k: Controller) -> Self {
        Self { k }
    }

    /// The optimal gain of `sys`.
    pub fn oracle(sys: &LqrSystem) -> Result<Self> {
        Ok(Self::new(sys.optimal_controller()?))
    }

    pub fn gain(&self) -> &Controller {
        &self.k
    }
}

impl Policy for FixedGain {
    fn act(&mut self, _t: usize, x: &[f64], u: &mut [f64]) -> Result<()> {
        mat_vec_into(&self.k.gain, x, u);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsGreedyConfig {
    /// `c` in the exploration scale `σ_t = c t^{-1/4}`.
    pub explore_scale: f64,
    /// Time of the first re-estimation; later ones double.
    pub first_update: usize,
    /// Gains with larger operator norm are rejected.
    pub gain_cap: f64,
    /// Ridge parameter of the joint estimator.
    pub lambda: f64,
    /// Revert to `K₀` until the next re-estimation once `‖x_t‖²` exceeds this.
    pub reset_norm_sq: f64,
}

impl Default for EpsGreedyConfig {
    fn default() -> Self {
        Self {
            explore_scale: 1.0,
            first_update: 64,
            gain_cap: 10.0,
            lambda: 1.0,
            reset_norm_sq: f64::INFINITY,
        }
    }
}

/// Certainty equivalence with exploration `u_t = K̂ x_t + ξ_t`, `ξ_t ~ N(0, c² t^{-1/2} I)`.
///
/// `[A B]` is re-estimated jointly from `x_{t+1} ≈ A x_t + B u_t` at doubling
/// times. A new gain is adopted only if synthesis succeeds, the estimated
/// closed loop is stable and `‖K̂‖` stays under the cap; otherwise the previous
/// gain (initially `K₀`) is kept. A state excursion beyond the reset level
/// puts `K₀` back in charge until the next re-estimation.
pub struct CeEpsGreedy {
    cfg: EpsGreedyConfig,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    k0: Controller,
    k: Controller,
    estimator: RlsEstimator,
    rng: RngStream,
    next_update: usize,
    epoch: usize,
    z_buf: Vec<f64>,
    xi: Vec<f64>,
    report: PolicyReport,
}

impl CeEpsGreedy {
    pub fn new(
        cfg: EpsGreedyConfig,
        k0: Controller,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        exploration: RngStream,
    ) -> Result<Self> {
        let (k, d) = k0.gain.shape();
        if q.shape() != (d, d) || r.shape() != (k, k) {
            return Err(LqrError::DimensionMismatch("K0, Q, R disagree".into()));
        }
        if cfg.first_update == 0 {
            return Err(LqrError::Config("first_update must be positive".into()));
        }
        Ok(Self {
            cfg,
            q,
            r,
            k: k0.clone(),
            k0,
            estimator: RlsEstimator::new(d, d + k, cfg.lambda)?,
            rng: exploration,
            next_update: cfg.first_update,
            epoch: 0,
            z_buf: vec![0.0; d + k],
            xi: vec![0.0; k],
            report: PolicyReport::default(),
        })
    }

    fn reestimate(&mut self, t: usize) {
        let d = self.q.nrows();
        let k = self.r.nrows();
        let theta = self.estimator.estimate();
        let a_hat = theta.columns(0, d).into_owned();
        let b_hat = theta.columns(d, k).into_owned();
        self.report.estimates.push((t, theta));
        if let Ok(gain) = synthesize(&a_hat, &b_hat, &self.q, &self.r) {
            let stable = spectral_radius(&(&a_hat + &b_hat * &gain.gain)) < 1.0;
            if stable && op_norm(&gain.gain) <= self.cfg.gain_cap {
                self.k = gain;
                self.report.phase_gains.push(PhaseGain {
                    phase: self.epoch,
                    start: t,
                    gain: self.k.gain.clone(),
                });
            }
        }
        self.epoch += 1;
    }
}

impl Policy for CeEpsGreedy {
    fn act(&mut self, t: usize, x: &[f64], u: &mut [f64]) -> Result<()> {
        if t == self.next_update {
            self.reestimate(t);
            self.next_update = self.next_update.saturating_mul(2);
        }
        if vector_norm_sq(x) > self.cfg.reset_norm_sq && self.k != self.k0 {
            self.k = self.k0.clone();
            self.report.phase_gains.push(PhaseGain {
                phase: self.epoch,
                start: t,
                gain: self.k.gain.clone(),
            });
        }
        let scale = self.cfg.explore_scale * (t as f64).powf(-0.25);
        self.rng.fill_gaussian(scale, &mut self.xi);
        mat_vec_into(&self.k.gain, x, u);
        for (ui, e) in u.iter_mut().zip(&self.xi) {
            *ui += e;
        }
        Ok(())
    }

    fn observe(&mut self, _t: usize, x: &[f64], u: &[f64], next: &[f64]) -> Result<()> {
        let d = x.len();
        self.z_buf[..d].copy_from_slice(x);
        self.z_buf[d..].copy_from_slice(u);
        self.estimator.update(&self.z_buf, next)
    }

    fn report(&self) -> PolicyReport {
        self.report.clone()
    }
}
