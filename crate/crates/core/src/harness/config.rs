//! TOML experiment configuration and learner construction.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::systems::{benchmark2x2, matrix, random_system, SystemFile};
use crate::control::{policy_cost, Controller, LqrSystem};
use crate::error::{LqrError, Result};
use crate::learners::config::{DEFAULT_PRACTICAL_SCALE, Mode};
use crate::learners::{
    derive_params_alg_a, derive_params_alg_b, AlgorithmA, AlgorithmB, CeEpsGreedy, DerivedParams,
    EpsGreedyConfig, FixedGain, LearnerConfig,
};
use crate::linalg::{op_norm, sym_eigenvalues};
use crate::rng::{Purpose, RngStream};
use crate::simulation::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// `benchmark2x2`, `random` or `matrices` (the default).
    #[serde(default = "matrices")]
    pub generator: String,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Dimensions and seed of the `random` generator.
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    /// Row-major matrices of the `matrices` generator.
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
}

fn matrices() -> String {
    "matrices".into()
}

fn one() -> f64 {
    1.0
}

impl SystemSpec {
    pub fn benchmark() -> Self {
        Self {
            generator: "benchmark2x2".into(),
            sigma: 1.0,
            d: None,
            k: None,
            seed: None,
            a: None,
            b: None,
            q: None,
            r: None,
        }
    }

    /// The `[system]` table of any TOML document (other tables are ignored).
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: toml::Table = toml::from_str(text).map_err(|e| LqrError::Config(e.to_string()))?;
        let table = doc
            .get("system")
            .cloned()
            .ok_or_else(|| LqrError::Config("missing [system] table".into()))?;
        table.try_into().map_err(|e: toml::de::Error| LqrError::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<LqrSystem> {
        match self.generator.as_str() {
            "benchmark2x2" => benchmark2x2(self.sigma),
            "random" => {
                let need = |v: Option<usize>, n: &str| {
                    v.ok_or_else(|| LqrError::Config(format!("random generator needs '{n}'")))
                };
                random_system(
                    need(self.d, "d")?,
                    need(self.k, "k")?,
                    self.seed.ok_or_else(|| LqrError::Config("random generator needs 'seed'".into()))?,
                    self.sigma,
                )
            }
            "matrices" => {
                let get = |m: &Option<Vec<Vec<f64>>>, n: &str| {
                    m.clone()
                        .ok_or_else(|| LqrError::Config(format!("matrices generator needs '{n}'")))
                };
                SystemFile {
                    a: get(&self.a, "a")?,
                    b: get(&self.b, "b")?,
                    q: get(&self.q, "q")?,
                    r: get(&self.r, "r")?,
                    sigma: self.sigma,
                }
                .to_system()
            }
            other => Err(LqrError::Config(format!("unknown system generator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    AlgorithmA,
    AlgorithmB,
    CeEpsGreedy,
    Oracle,
    FixedK,
}

impl std::str::FromStr for LearnerKind {
    type Err = LqrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm_a" => Ok(Self::AlgorithmA),
            "algorithm_b" => Ok(Self::AlgorithmB),
            "ce_eps_greedy" => Ok(Self::CeEpsGreedy),
            "oracle" => Ok(Self::Oracle),
            "fixed_k" => Ok(Self::FixedK),
            other => Err(LqrError::Config(format!("unknown learner kind '{other}'"))),
        }
    }
}

/// One learner of an experiment. Problem constants left out are filled in from
/// the true system: `alpha0`/`alpha1` from the spectra of `Q` and `R`,
/// `vartheta` from `max(‖A⋆‖, ‖B⋆‖)`, `nu` from `J⋆` and `nu0` from `J(K₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub name: Option<String>,
    /// Safe gain, k×d rows; zero if omitted.
    pub k0: Option<Vec<Vec<f64>>>,
    /// Gain of `fixed_k`.
    pub gain: Option<Vec<Vec<f64>>>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub vartheta: Option<f64>,
    pub nu: Option<f64>,
    pub nu0: Option<f64>,
    pub c0: Option<f64>,
    pub eps0: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_scale")]
    pub practical_scale: f64,
    pub practical_tau_scale: Option<f64>,
    pub practical_lambda_scale: Option<f64>,
    /// ε-greedy settings.
    pub explore_scale: Option<f64>,
    pub first_update: Option<usize>,
    pub gain_cap: Option<f64>,
    pub ridge: Option<f64>,
    /// `‖x‖²` level that sends ε-greedy back to `K₀`; defaults to `50 J(K₀)/α₀`.
    pub reset_state: Option<f64>,
}

/// Default ε-greedy reset level as a multiple of the `K₀` stationary state energy bound.
const RESET_MULTIPLE: f64 = 50.0;

fn default_scale() -> f64 {
    DEFAULT_PRACTICAL_SCALE
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            name: None,
            k0: None,
            gain: None,
            alpha0: None,
            alpha1: None,
            vartheta: None,
            nu: None,
            nu0: None,
            c0: None,
            eps0: None,
            mode: Mode::default(),
            practical_scale: DEFAULT_PRACTICAL_SCALE,
            practical_tau_scale: None,
            practical_lambda_scale: None,
            explore_scale: None,
            first_update: None,
            gain_cap: None,
            ridge: None,
            reset_state: None,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            serde_json::to_value(self.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        })
    }

    pub fn k0(&self, sys: &LqrSystem) -> Result<Controller> {
        let k0 = match &self.k0 {
            Some(rows) => Controller::new(matrix("k0", rows)?),
            None => Controller::zeros(sys.action_dim(), sys.state_dim()),
        };
        k0.check_dims(sys)?;
        Ok(k0)
    }

    /// Full learner configuration for horizon `horizon` on `sys`.
    pub fn learner_config(&self, sys: &LqrSystem, horizon: usize) -> Result<LearnerConfig> {
        let ev = |m: &DMatrix<f64>| sym_eigenvalues(m);
        let (eq, er) = (ev(&sys.q), ev(&sys.r));
        let alpha0 = self.alpha0.unwrap_or(eq[0].min(er[0]));
        let alpha1 = self.alpha1.unwrap_or(eq[eq.len() - 1].max(er[er.len() - 1]));
        let vartheta = self.vartheta.unwrap_or(op_norm(&sys.a).max(op_norm(&sys.b)));
        let nu = match self.nu {
            Some(v) => v,
            None => sys.optimal_cost()?,
        };
        let nu0 = match self.nu0 {
            Some(v) => v,
            None => policy_cost(sys, &self.k0(sys)?)?,
        };
        let need = |v: Option<f64>, n: &str| {
            v.ok_or_else(|| LqrError::Config(format!("{} needs '{n}'", self.label())))
        };
        let cfg = LearnerConfig {
            alpha0,
            alpha1,
            vartheta,
            nu,
            nu0,
            c0: need(self.c0, "c0")?,
            eps0: need(self.eps0, "eps0")?,
            sigma: sys.sigma,
            horizon,
            mode: self.mode,
            practical_scale: self.practical_scale,
            practical_tau_scale: self.practical_tau_scale,
            practical_lambda_scale: self.practical_lambda_scale,
        };
        cfg.validate(sys)?;
        Ok(cfg)
    }

    pub fn eps_greedy(&self, sys: &LqrSystem) -> Result<EpsGreedyConfig> {
        let d = EpsGreedyConfig::default();
        let reset_norm_sq = match self.reset_state {
            Some(v) => v,
            None => {
                let alpha0 = sym_eigenvalues(&sys.q)[0].min(sym_eigenvalues(&sys.r)[0]);
                RESET_MULTIPLE * policy_cost(sys, &self.k0(sys)?)? / alpha0
            }
        };
        Ok(EpsGreedyConfig {
            explore_scale: self.explore_scale.unwrap_or(sys.sigma),
            first_update: self.first_update.unwrap_or(d.first_update),
            gain_cap: self.gain_cap.unwrap_or(d.gain_cap),
            lambda: self.ridge.unwrap_or(d.lambda),
            reset_norm_sq,
        })
    }

    /// Derived parameters of the phased learners (`None` for the others).
    pub fn derived_params(&self, sys: &LqrSystem, horizon: usize) -> Result<Option<DerivedParams>> {
        let (d, k) = (sys.state_dim(), sys.action_dim());
        Ok(match self.kind {
            LearnerKind::AlgorithmA => Some(derive_params_alg_a(&self.learner_config(sys, horizon)?, d)?),
            LearnerKind::AlgorithmB => {
                Some(derive_params_alg_b(&self.learner_config(sys, horizon)?, d, k)?)
            }
            _ => None,
        })
    }

    /// A fresh policy for trial `trial` at horizon `horizon`. Each learner sees
    /// only the true matrix it is allowed to know.
    pub fn build(
        &self,
        sys: &LqrSystem,
        horizon: usize,
        base_seed: u64,
        trial: u64,
    ) -> Result<Box<dyn Policy + Send>> {
        let stream = |p| RngStream::for_trial(base_seed, horizon as u64, trial, p);
        Ok(match self.kind {
            LearnerKind::AlgorithmA => {
                let params = derive_params_alg_a(&self.learner_config(sys, horizon)?, sys.state_dim())?;
                Box::new(AlgorithmA::new(
                    params,
                    self.k0(sys)?,
                    sys.b.clone(),
                    sys.q.clone(),
                    sys.r.clone(),
                )?)
            }
            LearnerKind::AlgorithmB => {
                let params = derive_params_alg_b(
                    &self.learner_config(sys, horizon)?,
                    sys.state_dim(),
                    sys.action_dim(),
                )?;
                Box::new(AlgorithmB::new(
                    params,
                    self.k0(sys)?,
                    sys.a.clone(),
                    sys.q.clone(),
                    sys.r.clone(),
                    sys.sigma,
                    stream(Purpose::ActionNoise)?,
                )?)
            }
            LearnerKind::CeEpsGreedy => Box::new(CeEpsGreedy::new(
                self.eps_greedy(sys)?,
                self.k0(sys)?,
                sys.q.clone(),
                sys.r.clone(),
                stream(Purpose::Exploration)?,
            )?),
            LearnerKind::Oracle => Box::new(FixedGain::oracle(sys)?),
            LearnerKind::FixedK => {
                let rows = self
                    .gain
                    .as_ref()
                    .ok_or_else(|| LqrError::Config("fixed_k needs 'gain'".into()))?;
                let k = Controller::new(matrix("gain", rows)?);
                k.check_dims(sys)?;
                Box::new(FixedGain::new(k))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub t_grid: Vec<usize>,
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Extra times at which cumulative cost is recorded; each horizon is always included.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// Estimate mean regret with the oracle's same-noise cost as a control variate.
    #[serde(default)]
    pub control_variate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(rename = "learner")]
    pub learners: Vec<LearnerSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LqrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LqrError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.t_grid.is_empty() || e.t_grid[0] == 0 || e.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LqrError::Config("t_grid must be positive and strictly increasing".into()));
        }
        if e.n_seeds == 0 {
            return Err(LqrError::Config("n_seeds must be positive".into()));
        }
        let max_t = *e.t_grid.last().unwrap();
        if e.checkpoints.iter().any(|&c| c > max_t) {
            return Err(LqrError::Config("checkpoint beyond the largest horizon".into()));
        }
        if self.learners.is_empty() {
            return Err(LqrError::Config("at least one [[learner]] is required".into()));
        }
        let mut names: Vec<String> = self.learners.iter().map(LearnerSpec::label).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(LqrError::Config("learner names must be distinct".into()));
        }
        let sys = self.system.build().map_err(config_error)?;
        for l in &self.learners {
            l.k0(&sys).map_err(config_error)?;
            if matches!(l.kind, LearnerKind::AlgorithmA | LearnerKind::AlgorithmB) {
                l.learner_config(&sys, max_t).map_err(config_error)?;
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated checkpoint times for horizon `horizon`, always containing 0 and `horizon`.
    pub fn checkpoints_for(&self, horizon: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .experiment
            .checkpoints
            .iter()
            .copied()
            .filter(|&c| c <= horizon)
            .chain([0, horizon])
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Dimension and validation problems in a config are configuration errors.
fn config_error(e: LqrError) -> LqrError {
    match e {
        LqrError::DimensionMismatch(m) | LqrError::InvalidSystem(m) => LqrError::Config(m),
        other => other,
    }
}
