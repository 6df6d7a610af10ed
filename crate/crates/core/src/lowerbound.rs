//! The scalar family with a degenerate optimal gain:
//! `x_{t+1} = a x_t + b u_t + w_t`, `c_t = x_t² + u_t²`, `a = 1/√5`,
//! `b = χ√ε`, `ε = T^{-1/2}/4`, `χ = ±1`.
//!
//! As `T` grows the optimal gain shrinks like `√ε`, so no learner can tell the
//! sign of `b` cheaply; regret must grow like `√T`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::LqrSystem;
use crate::error::{LqrError, Result};
use crate::harness::config::LearnerSpec;
use crate::harness::fit::{fit_exponent, mean, stderr, ExponentFit, RegretSamples};
use crate::rng::{Purpose, RngStream};
use crate::simulation::{rollout_with, GaussianNoise, Policy, StepSink, Trajectory};

/// Horizon from which the construction is admissible as stated.
pub const MIN_HORIZON: usize = 12_000;

pub fn default_a() -> f64 {
    1.0 / 5f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub a: f64,
    pub epsilon: f64,
    pub chi: f64,
    pub sigma: f64,
    pub horizon: usize,
    pub b: f64,
    pub p_star: f64,
    pub k_star: f64,
}

impl LowerBoundInstance {
    pub fn system(&self) -> Result<LqrSystem> {
        LqrSystem::scalar(self.a, self.b, self.sigma)
    }

    /// `J(k⋆) = σ² p⋆`.
    pub fn optimal_cost(&self) -> f64 {
        self.sigma * self.sigma * self.p_star
    }

    /// Check the closed-form brackets on `p⋆`, `k⋆` and the sign of `k⋆`.
    pub fn check(&self) -> Result<()> {
        let eps = self.epsilon;
        let fail = |what: &str| Err(LqrError::InvariantViolation(format!("{what} for {self:?}")));
        if eps > 1.0 / 400.0 {
            return fail("epsilon above 1/400");
        }
        if !(1.0..=1.25).contains(&self.p_star) {
            return fail("p* outside [1, 5/4]");
        }
        let k = self.k_star.abs();
        if k < 0.99 * (eps / 5.0).sqrt() || k > (eps / 3.0).sqrt() {
            return fail("|k*| outside [0.99 sqrt(eps/5), sqrt(eps/3)]");
        }
        if self.k_star.signum() != -self.chi {
            return fail("sign of k* does not oppose chi");
        }
        if self.optimal_cost() > 2.0 * self.sigma * self.sigma {
            return fail("J(k*) above 2 sigma^2");
        }
        Ok(())
    }
}

/// Positive root `p⋆` of `b²p² + (1 − a² − b²)p − 1 = 0` and `k⋆ = −abp⋆/(1 + b²p⋆)`.
pub fn scalar_riccati(a: f64, b: f64) -> Result<(f64, f64)> {
    let b2 = b * b;
    let lin = 1.0 - a * a - b2;
    let p = if b2 == 0.0 {
        if lin <= 0.0 {
            return Err(LqrError::NoPositiveRoot);
        }
        1.0 / lin
    } else {
        // Stable form of (−lin + √(lin² + 4b²))/(2b²).
        let disc = (lin * lin + 4.0 * b2).sqrt();
        if lin >= 0.0 {
            2.0 / (lin + disc)
        } else {
            (disc - lin) / (2.0 * b2)
        }
    };
    let k = -a * b * p / (1.0 + b2 * p);
    Ok((p, k))
}

/// Instance for horizon `T` with `ε = T^{-1/2}/4` and sign `χ`.
pub fn make_instance(horizon: usize, sigma: f64, chi: f64) -> Result<LowerBoundInstance> {
    if !(sigma > 0.0) {
        return Err(LqrError::Config("sigma must be positive".into()));
    }
    if chi != 1.0 && chi != -1.0 {
        return Err(LqrError::Config(format!("chi must be +1 or -1, got {chi}")));
    }
    if horizon == 0 {
        return Err(LqrError::Config("horizon must be positive".into()));
    }
    if horizon < MIN_HORIZON {
        log::warn!("horizon {horizon} is below {MIN_HORIZON}; the family is used outside its stated range");
    }
    let a = default_a();
    let epsilon = 0.25 / (horizon as f64).sqrt();
    let b = chi * epsilon.sqrt();
    let (p_star, k_star) = scalar_riccati(a, b)?;
    let inst = LowerBoundInstance {
        a,
        epsilon,
        chi,
        sigma,
        horizon,
        b,
        p_star,
        k_star,
    };
    if epsilon <= 1.0 / 400.0 {
        inst.check()?;
    }
    Ok(inst)
}

/// Both sides of the pathwise regret representation on one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretIdentity {
    /// `Σ (x_t² + u_t² − σ²p⋆)`
    pub lhs: f64,
    /// `Σ (1 + b²p⋆)(u_t − k⋆x_t)² − p⋆ x_{T+1}²`
    pub rhs: f64,
    /// `Σ p⋆(w_t² − σ²) + 2 Σ p⋆ w_t (a x_t + b u_t) + p⋆ x_1²`, equal to `lhs − rhs` on every path.
    pub martingale: f64,
}

pub fn regret_identity_check(traj: &Trajectory, inst: &LowerBoundInstance) -> Result<RegretIdentity> {
    if traj.state_dim() != 1 || traj.action_dim() != 1 {
        return Err(LqrError::DimensionMismatch("regret identity needs a scalar trajectory".into()));
    }
    let mut acc = IdentityAccumulator::new(inst, traj.state(0)[0]);
    for t in 0..traj.len() {
        let (x, u, w) = (traj.state(t)[0], traj.action(t)[0], traj.noise(t)[0]);
        acc.push(x, u, w, traj.state(t + 1)[0]);
    }
    Ok(acc.finish())
}

/// Streaming form of [`regret_identity_check`], usable as a rollout sink.
#[derive(Debug, Clone)]
pub struct IdentityAccumulator {
    inst: LowerBoundInstance,
    lhs: f64,
    rhs: f64,
    martingale: f64,
    last: f64,
}

impl IdentityAccumulator {
    pub fn new(inst: &LowerBoundInstance, x1: f64) -> Self {
        Self {
            inst: *inst,
            lhs: 0.0,
            rhs: 0.0,
            martingale: inst.p_star * x1 * x1,
            last: x1,
        }
    }

    fn push(&mut self, x: f64, u: f64, w: f64, next: f64) {
        let LowerBoundInstance { a, b, p_star: p, k_star: k, sigma, .. } = self.inst;
        let s2 = sigma * sigma;
        self.lhs += x * x + u * u - s2 * p;
        self.rhs += (1.0 + b * b * p) * (u - k * x).powi(2);
        self.martingale += p * (w * w - s2) + 2.0 * p * w * (a * x + b * u);
        self.last = next;
    }

    pub fn finish(&self) -> RegretIdentity {
        RegretIdentity {
            lhs: self.lhs,
            rhs: self.rhs - self.inst.p_star * self.last * self.last,
            martingale: self.martingale,
        }
    }
}

impl StepSink for IdentityAccumulator {
    fn record(&mut self, _t: usize, x: &[f64], u: &[f64], w: &[f64], _cost: f64, next: &[f64]) {
        self.push(x[0], u[0], w[0], next[0]);
    }
}

/// Builds a fresh learner for one trial. The instance is passed so a known-sign
/// oracle can be expressed; honest learners read only `a` and `sigma`.
pub trait LearnerFactory: Sync {
    fn build(&self, inst: &LowerBoundInstance, base_seed: u64, trial: u64) -> Result<Box<dyn Policy + Send>>;
}

impl<F> LearnerFactory for F
where
    F: Fn(&LowerBoundInstance, u64, u64) -> Result<Box<dyn Policy + Send>> + Sync,
{
    fn build(&self, inst: &LowerBoundInstance, base_seed: u64, trial: u64) -> Result<Box<dyn Policy + Send>> {
        self(inst, base_seed, trial)
    }
}

/// Config-driven learners on the family. Unset constants take the values known
/// without `b`: `α₀ = α₁ = ϑ = 1`, `ν₀ = σ²/(1 − a²)` (the cost of `K₀ = 0`) and
/// `ν = min(2σ², ν₀)`, since `J⋆ ≤ J(K₀)`.
impl LearnerFactory for LearnerSpec {
    fn build(&self, inst: &LowerBoundInstance, base_seed: u64, trial: u64) -> Result<Box<dyn Policy + Send>> {
        let s2 = inst.sigma * inst.sigma;
        let mut spec = self.clone();
        spec.alpha0.get_or_insert(1.0);
        spec.alpha1.get_or_insert(1.0);
        spec.vartheta.get_or_insert(1.0);
        if spec.k0.is_none() {
            spec.nu0.get_or_insert(s2 / (1.0 - inst.a * inst.a));
        }
        let nu = spec.nu0.map_or(2.0 * s2, |n0| n0.min(2.0 * s2));
        spec.nu.get_or_insert(nu);
        spec.build(&inst.system()?, inst.horizon, base_seed, trial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSpec {
    pub t_grid: Vec<usize>,
    pub n_seeds: usize,
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default)]
    pub base_seed: u64,
    /// Average the identity's right-hand side instead of the raw regret.
    #[serde(default)]
    pub variance_reduced: bool,
}

fn unit() -> f64 {
    1.0
}

/// `[lower_bound]` table plus `[[learner]]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub lower_bound: LowerBoundSpec,
    #[serde(rename = "learner")]
    pub learners: Vec<LearnerSpec>,
}

impl LowerBoundConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LqrError::Config(e.to_string()))?;
        let g = &cfg.lower_bound.t_grid;
        if g.len() < 3 || g[0] == 0 || g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LqrError::Config(
                "t_grid needs at least 3 positive increasing horizons".into(),
            ));
        }
        if cfg.lower_bound.n_seeds == 0 || cfg.learners.is_empty() {
            return Err(LqrError::Config("need seeds and at least one [[learner]]".into()));
        }
        if !(cfg.lower_bound.sigma > 0.0) {
            return Err(LqrError::Config("sigma must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub n_seeds: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub beta: f64,
    pub beta_ci: (f64, f64),
    pub shift: Option<f64>,
}

/// Sign of `b` for one trial, from its dedicated stream.
pub fn draw_sign(base_seed: u64, horizon: usize, trial: u64) -> Result<f64> {
    Ok(RngStream::for_trial(base_seed, horizon as u64, trial, Purpose::Sign)?.rademacher())
}

/// Identity terms of one trial; `lhs` is the regret `Σ c_t − T σ² p⋆`.
pub fn lower_bound_trial(
    factory: &dyn LearnerFactory,
    horizon: usize,
    sigma: f64,
    base_seed: u64,
    trial: u64,
) -> Result<RegretIdentity> {
    let chi = draw_sign(base_seed, horizon, trial)?;
    let inst = make_instance(horizon, sigma, chi)?;
    let sys = inst.system()?;
    let mut policy = factory.build(&inst, base_seed, trial)?;
    let mut noise = GaussianNoise::new(
        RngStream::for_trial(base_seed, horizon as u64, trial, Purpose::SystemNoise)?,
        sigma,
    );
    let mut sink = IdentityAccumulator::new(&inst, 0.0);
    rollout_with(&sys, policy.as_mut(), horizon, &mut noise, &[0.0], &mut sink)?;
    Ok(sink.finish())
}

/// Mean regret per horizon over `spec.n_seeds` randomized-sign trials and the
/// fitted exponent. With `spec.variance_reduced` each trial contributes the
/// identity's right-hand side, which has the same mean as the regret but
/// none of its martingale noise.
pub fn lower_bound_experiment(
    factory: &dyn LearnerFactory,
    spec: &LowerBoundSpec,
    workers: usize,
) -> Result<ScalingReport> {
    let LowerBoundSpec { ref t_grid, n_seeds, sigma, base_seed, variance_reduced } = *spec;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LqrError::Config(e.to_string()))?;
    let jobs: Vec<(usize, u64)> = t_grid
        .iter()
        .flat_map(|&t| (0..n_seeds as u64).map(move |s| (t, s)))
        .collect();
    let results: Vec<Result<RegretIdentity>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, s)| lower_bound_trial(factory, t, sigma, base_seed, s))
            .collect()
    });
    let mut points = Vec::with_capacity(t_grid.len());
    let mut per_t = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let chunk = &results[i * n_seeds..(i + 1) * n_seeds];
        let ok: Vec<f64> = chunk
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|id| if variance_reduced { id.rhs } else { id.lhs })
            .collect();
        let failed = chunk.len() - ok.len();
        if failed > 0 {
            log::warn!("{failed} of {n_seeds} runs failed at T = {t}");
        }
        if ok.is_empty() {
            return Err(LqrError::InsufficientData(format!("every run failed at T = {t}")));
        }
        points.push(ScalingPoint {
            horizon: t,
            n_seeds: ok.len(),
            mean_regret: mean(&ok),
            stderr: stderr(&ok),
            failed,
        });
        per_t.push(ok);
    }
    let samples = RegretSamples::new(t_grid.to_vec(), per_t)?;
    let mut boot = RngStream::for_trial(base_seed, 0, 0, Purpose::Bootstrap)?;
    let ExponentFit { beta, ci, shift, .. } = fit_exponent(&samples, &mut boot)?;
    Ok(ScalingReport {
        points,
        beta,
        beta_ci: ci,
        shift,
    })
}
