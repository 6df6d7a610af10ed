//! Problem constants and the run parameters derived from them.

use serde::{Deserialize, Serialize};

use crate::control::LqrSystem;
use crate::error::{LqrError, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Constants exactly as in the regret theorems.
    Theoretical,
    /// `τ₀`, `x_b`, `λ` shrunk by configurable factors; phase schedule untouched.
    #[default]
    Practical,
}

impl std::str::FromStr for Mode {
    type Err = LqrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Mode::Theoretical),
            "practical" => Ok(Mode::Practical),
            other => Err(LqrError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

pub const DEFAULT_PRACTICAL_SCALE: f64 = 1e-3;

fn default_scale() -> f64 {
    DEFAULT_PRACTICAL_SCALE
}

/// Known problem constants handed to a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Lower bound on the eigenvalues of `Q` and `R`.
    pub alpha0: f64,
    /// Upper bound on `‖Q‖`, `‖R‖`.
    pub alpha1: f64,
    /// Upper bound on `‖A⋆‖`, `‖B⋆‖`.
    pub vartheta: f64,
    /// Upper bound on `J⋆`.
    pub nu: f64,
    /// Upper bound on `J(K₀)`.
    pub nu0: f64,
    /// Perturbation constants of the certainty-equivalence lemma.
    pub c0: f64,
    pub eps0: f64,
    pub sigma: f64,
    pub horizon: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Shrink factor for `τ₀`, `x_b`, `λ` in practical mode.
    #[serde(default = "default_scale")]
    pub practical_scale: f64,
    /// Separate factor for `τ₀`; defaults to `practical_scale`.
    #[serde(default)]
    pub practical_tau_scale: Option<f64>,
    /// Separate factor for `λ`; defaults to `practical_scale`.
    #[serde(default)]
    pub practical_lambda_scale: Option<f64>,
}

impl LearnerConfig {
    /// Check positivity of every constant and the cost-matrix bounds against `sys`.
    pub fn validate(&self, sys: &LqrSystem) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("vartheta", self.vartheta),
            ("nu", self.nu),
            ("nu0", self.nu0),
            ("c0", self.c0),
            ("eps0", self.eps0),
            ("sigma", self.sigma),
            ("practical_scale", self.practical_scale),
            ("practical_tau_scale", self.practical_tau_scale.unwrap_or(1.0)),
            ("practical_lambda_scale", self.practical_lambda_scale.unwrap_or(1.0)),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LqrError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(LqrError::Config("horizon must be positive".into()));
        }
        let tol = 1e-12;
        for (name, m) in [("Q", &sys.q), ("R", &sys.r)] {
            let ev = linalg::sym_eigenvalues(m);
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if hi > self.alpha1 * (1.0 + tol) {
                return Err(LqrError::Config(format!(
                    "||{name}|| = {hi} exceeds alpha1 = {}",
                    self.alpha1
                )));
            }
            if lo < self.alpha0 * (1.0 - tol) {
                return Err(LqrError::Config(format!(
                    "||{name}^-1|| = {} exceeds 1/alpha0 = {}",
                    1.0 / lo,
                    1.0 / self.alpha0
                )));
            }
        }
        if self.nu0 < self.nu {
            log::warn!(
                "nu0 = {} is below nu = {}; K0 claims to beat the optimal cost bound",
                self.nu0,
                self.nu
            );
        }
        Ok(())
    }

    fn tau_scale(&self) -> f64 {
        self.practical_tau_scale.unwrap_or(self.practical_scale)
    }

    fn lambda_scale(&self) -> f64 {
        self.practical_lambda_scale.unwrap_or(self.practical_scale)
    }

    fn kappas(&self) -> (f64, f64) {
        let floor = self.alpha0 * self.sigma * self.sigma;
        let kappa0 = (self.nu0 / floor).sqrt();
        let kappa = ((self.nu + self.eps0 * self.eps0 * self.c0) / floor).sqrt();
        (kappa0, kappa)
    }
}

/// Run parameters of the phased learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub kappa0: f64,
    pub kappa: f64,
    /// `1 / (2κ²)`
    pub gamma: f64,
    pub tau0: usize,
    pub x_b: f64,
    pub lambda: f64,
    /// Initial non-degeneracy threshold (noisy warm-up learner only).
    pub mu0: Option<f64>,
    pub n_t: usize,
    /// `τ_0, …, τ_{n_T}` followed by `T + 1`.
    pub phase_starts: Vec<usize>,
    pub mode: Mode,
    pub horizon: usize,
}

impl DerivedParams {
    /// Start of phase `i` (`i = n_T + 1` gives `T + 1`).
    pub fn tau(&self, i: usize) -> usize {
        self.phase_starts[i]
    }

    /// `μ_i = μ₀ 2^{-i}`.
    pub fn mu(&self, i: usize) -> Option<f64> {
        self.mu0.map(|m| m * 0.5f64.powi(i as i32))
    }

    /// Phase containing time `t`, or `None` during the initial warm-up.
    pub fn phase_of(&self, t: usize) -> Option<usize> {
        if t < self.tau0 {
            return None;
        }
        let idx = self.phase_starts.partition_point(|&s| s <= t);
        Some((idx - 1).min(self.n_t))
    }
}

/// Largest `n` with `τ₀ 4^n ≤ T`, and the schedule built from it.
fn phase_schedule(tau0: usize, horizon: usize) -> (usize, Vec<usize>) {
    let mut starts = vec![tau0];
    let mut n = 0usize;
    while let Some(next) = starts[n].checked_mul(4) {
        if next > horizon {
            break;
        }
        starts.push(next);
        n += 1;
    }
    starts.push(horizon + 1);
    (n, starts)
}

fn finish(
    cfg: &LearnerConfig,
    kappa0: f64,
    kappa: f64,
    tau0_theory: f64,
    x_b: f64,
    lambda: f64,
    mu0: Option<f64>,
) -> Result<DerivedParams> {
    let (tau0, x_b, lambda) = match cfg.mode {
        Mode::Theoretical => (tau0_theory.ceil(), x_b, lambda),
        Mode::Practical => (
            (tau0_theory.ceil() * cfg.tau_scale()).ceil().max(1.0),
            x_b * cfg.practical_scale,
            lambda * cfg.lambda_scale(),
        ),
    };
    if !tau0.is_finite() || tau0 >= cfg.horizon as f64 {
        return Err(LqrError::HorizonTooShort {
            tau0: if tau0.is_finite() && tau0 < usize::MAX as f64 {
                tau0 as usize
            } else {
                usize::MAX
            },
            horizon: cfg.horizon,
        });
    }
    let tau0 = tau0 as usize;
    let (n_t, phase_starts) = phase_schedule(tau0, cfg.horizon);
    Ok(DerivedParams {
        kappa0,
        kappa,
        gamma: 1.0 / (2.0 * kappa * kappa),
        tau0,
        x_b,
        lambda,
        mu0,
        n_t,
        phase_starts,
        mode: cfg.mode,
        horizon: cfg.horizon,
    })
}

/// Parameters of the unknown-`A` learner for state dimension `d`.
///
/// `λ = x_b = 135 d κ² σ² max{κ₀⁶, 4κ⁶} log(3T)`, `τ₀ = ⌈80 d λ (1+ϑ²) / (σ² ε₀²)⌉`.
pub fn derive_params_alg_a(cfg: &LearnerConfig, d: usize) -> Result<DerivedParams> {
    let (kappa0, kappa) = cfg.kappas();
    let s2 = cfg.sigma * cfg.sigma;
    let t = cfg.horizon as f64;
    let x_b = 135.0
        * d as f64
        * kappa.powi(2)
        * s2
        * kappa0.powi(6).max(4.0 * kappa.powi(6))
        * (3.0 * t).ln();
    let lambda = x_b;
    let tau0 = 80.0 * d as f64 * lambda * (1.0 + cfg.vartheta.powi(2)) / (s2 * cfg.eps0.powi(2));
    finish(cfg, kappa0, kappa, tau0, x_b, lambda, None)
}

/// Parameters of the unknown-`B` learner for state dimension `d` and action dimension `k`.
///
/// `x_b = 135 d κ² σ² max{(1+ϑ)²κ₀⁶, 4κ⁶} log(4T)`, `λ = κ² x_b`,
/// `τ₀ = ⌈80 k λ (1+ϑ²) / (σ² ε₀²)⌉`, `μ₀ = 4 κ C₀ ε₀`.
pub fn derive_params_alg_b(cfg: &LearnerConfig, d: usize, k: usize) -> Result<DerivedParams> {
    let (kappa0, kappa) = cfg.kappas();
    let s2 = cfg.sigma * cfg.sigma;
    let t = cfg.horizon as f64;
    let x_b = 135.0
        * d as f64
        * kappa.powi(2)
        * s2
        * ((1.0 + cfg.vartheta).powi(2) * kappa0.powi(6)).max(4.0 * kappa.powi(6))
        * (4.0 * t).ln();
    let lambda = kappa * kappa * x_b;
    let tau0 = 80.0 * k as f64 * lambda * (1.0 + cfg.vartheta.powi(2)) / (s2 * cfg.eps0.powi(2));
    let mu0 = 4.0 * kappa * cfg.c0 * cfg.eps0;
    finish(cfg, kappa0, kappa, tau0, x_b, lambda, Some(mu0))
}
