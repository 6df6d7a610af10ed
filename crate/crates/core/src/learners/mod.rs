//! Online learners and their shared machinery.

pub mod algorithm_a;
pub mod algorithm_b;
pub mod baselines;
pub mod calibrate;
pub mod config;
pub mod monitor;

use nalgebra::DMatrix;

use crate::control::Controller;
use crate::linalg::{mat_vec_into, op_norm, vector_norm_sq};
use crate::simulation::{AbortReason, AbortRecord, PhaseGain, PolicyReport};

pub use algorithm_a::AlgorithmA;
pub use algorithm_b::AlgorithmB;
pub use baselines::{CeEpsGreedy, EpsGreedyConfig, FixedGain};
pub use config::{derive_params_alg_a, derive_params_alg_b, DerivedParams, LearnerConfig, Mode};

/// Called with `(phase, estimate)` at each phase start; its return value replaces the estimate.
pub type EstimateHook = Box<dyn FnMut(usize, DMatrix<f64>) -> DMatrix<f64> + Send>;

/// Phase gain bookkeeping with the permanent fallback to `K₀`.
#[derive(Debug, Clone)]
pub(crate) struct MainLoop {
    k0: Controller,
    current: Option<Controller>,
    x_b: f64,
    kappa: f64,
    abort: Option<AbortRecord>,
}

impl MainLoop {
    pub(crate) fn new(k0: Controller, x_b: f64, kappa: f64) -> Self {
        Self {
            k0,
            current: None,
            x_b,
            kappa,
            abort: None,
        }
    }

    pub(crate) fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub(crate) fn abort_record(&self) -> Option<AbortRecord> {
        self.abort
    }

    pub(crate) fn abort(&mut self, t: usize, reason: AbortReason) {
        if self.abort.is_none() {
            self.abort = Some(AbortRecord { t, reason });
            self.current = None;
        }
    }

    /// Adopt `k` for the phase starting at `t`, or abort if `‖k‖ > κ`.
    pub(crate) fn commit(&mut self, phase: usize, t: usize, k: Controller, report: &mut PolicyReport) {
        if self.aborted() {
            return;
        }
        if op_norm(&k.gain) > self.kappa {
            self.abort(t, AbortReason::GainBound);
            return;
        }
        report.phase_gains.push(PhaseGain {
            phase,
            start: t,
            gain: k.gain.clone(),
        });
        self.current = Some(k);
    }

    pub(crate) fn play_safe(&self, x: &[f64], u: &mut [f64]) {
        mat_vec_into(&self.k0.gain, x, u);
    }

    /// Main-loop action: the phase gain unless `‖x_t‖² > x_b` or an abort already happened.
    pub(crate) fn play(&mut self, t: usize, x: &[f64], u: &mut [f64]) {
        if !self.aborted() && vector_norm_sq(x) > self.x_b {
            self.abort(t, AbortReason::StateBound);
        }
        match &self.current {
            Some(k) => mat_vec_into(&k.gain, x, u),
            None => mat_vec_into(&self.k0.gain, x, u),
        }
    }
}
