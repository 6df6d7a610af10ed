//! Monte Carlo sweeps over horizons, seeds and learners.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, LearnerKind};
use super::fit::{fit_exponent, fit_log_squared, fit_sqrt, mean, stderr, ExponentFit, ModelFit, RegretSamples};
use super::systems::SystemFile;
use crate::control::{expected_cumulative_cost, LqrSystem};
use crate::error::{LqrError, Result};
use crate::learners::{DerivedParams, FixedGain, Mode};
use crate::rng::{Purpose, RngStream};
use crate::simulation::{rollout_with, AbortRecord, CostCheckpoints, GaussianNoise, Policy, PolicyReport};

/// Cumulative cost snapshots of one completed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunData {
    /// `(t, Σ_{s ≤ t} c_s)` at every checkpoint, starting with `(0, 0)`.
    pub checkpoints: Vec<(usize, f64)>,
    pub abort: Option<AbortRecord>,
    pub warmup_phases: Option<usize>,
    /// Oracle cost on the same noise at the same checkpoints, when a control variate is used.
    pub oracle: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub learner: usize,
    pub horizon: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunData, String>,
}

/// Cumulative regret per seed and checkpoint for one learner at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCurve {
    pub learner: String,
    pub horizon: usize,
    pub j_star: f64,
    pub checkpoints: Vec<usize>,
    /// `regret[seed][j]` at `checkpoints[j]`, successful seeds only.
    pub regret: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub aborted: Vec<bool>,
    pub warmup_phases: Vec<Option<usize>>,
    pub params: Option<DerivedParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub completed: usize,
    pub failed: usize,
    pub aborted: usize,
    pub params: Option<DerivedParams>,
    /// Histogram of the warm-up length `n_s` (index = `n_s`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_histogram: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fits {
    pub exponent: ExponentFit,
    pub log_squared: ModelFit,
    pub sqrt: ModelFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerSummary {
    pub name: String,
    pub kind: LearnerKind,
    pub mode: Option<Mode>,
    pub horizons: Vec<HorizonSummary>,
    pub fits: Option<Fits>,
    /// Why fitting was skipped, if it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub learner: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub j_star: f64,
    pub system: SystemFile,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub t_grid: Vec<usize>,
    pub learners: Vec<LearnerSummary>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub system: LqrSystem,
    pub j_star: f64,
    pub records: Vec<RunRecord>,
    /// Exact expected oracle cost at each checkpoint, per horizon, when a control variate is used.
    pub oracle_expected: BTreeMap<usize, Vec<f64>>,
}

fn checkpointed_costs(
    cfg: &ExperimentConfig,
    sys: &LqrSystem,
    policy: &mut dyn Policy,
    horizon: usize,
    seed: u64,
) -> Result<(CostCheckpoints, PolicyReport)> {
    let mut noise = GaussianNoise::new(
        RngStream::for_trial(cfg.experiment.base_seed, horizon as u64, seed, Purpose::SystemNoise)?,
        sys.sigma,
    );
    let mut sink = CostCheckpoints::new(&cfg.checkpoints_for(horizon));
    let x1 = vec![0.0; sys.state_dim()];
    let out = rollout_with(sys, policy, horizon, &mut noise, &x1, &mut sink)?;
    Ok((sink, out.report))
}

fn run_one(
    cfg: &ExperimentConfig,
    sys: &LqrSystem,
    learner: usize,
    horizon: usize,
    seed: u64,
) -> Result<RunData> {
    let spec = &cfg.learners[learner];
    let mut policy = spec.build(sys, horizon, cfg.experiment.base_seed, seed)?;
    let (sink, report) = checkpointed_costs(cfg, sys, policy.as_mut(), horizon, seed)?;
    let oracle = if cfg.experiment.control_variate {
        let mut oracle = FixedGain::oracle(sys)?;
        let (o, _) = checkpointed_costs(cfg, sys, &mut oracle, horizon, seed)?;
        Some(o.snapshots.iter().map(|&(_, c)| c).collect())
    } else {
        None
    };
    Ok(RunData {
        checkpoints: sink.snapshots,
        abort: report.abort,
        warmup_phases: report.warmup_phases,
        oracle,
    })
}

/// Every (learner, horizon, seed) trial of `cfg`, on `workers` threads.
///
/// Learners at the same horizon and seed share the system noise stream. The
/// records are ordered by (learner, horizon, seed) whatever the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let sys = cfg.system.build()?;
    let j_star = sys.optimal_cost()?;
    let mut oracle_expected = BTreeMap::new();
    if cfg.experiment.control_variate {
        let k = sys.optimal_controller()?;
        for &t in &cfg.experiment.t_grid {
            oracle_expected.insert(t, expected_cumulative_cost(&sys, &k, &cfg.checkpoints_for(t))?);
        }
    }
    let jobs: Vec<(usize, usize, u64)> = (0..cfg.learners.len())
        .flat_map(|l| {
            cfg.experiment.t_grid.iter().flat_map(move |&t| {
                (0..cfg.experiment.n_seeds as u64).map(move |s| (l, t, s))
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LqrError::Config(e.to_string()))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(l, t, s)| RunRecord {
                learner: l,
                horizon: t,
                seed: s,
                outcome: run_one(cfg, &sys, l, t, s).map_err(|e| e.to_string()),
            })
            .collect()
    });
    Ok(ExperimentResult {
        config: cfg.clone(),
        system: sys,
        j_star,
        records,
        oracle_expected,
    })
}

impl ExperimentResult {
    /// Curve of learner `learner` at horizon `horizon`.
    pub fn curve(&self, learner: usize, horizon: usize) -> Result<RegretCurve> {
        let spec = &self.config.learners[learner];
        let mut curve = RegretCurve {
            learner: spec.label(),
            horizon,
            j_star: self.j_star,
            checkpoints: self.config.checkpoints_for(horizon),
            regret: Vec::new(),
            seeds: Vec::new(),
            aborted: Vec::new(),
            warmup_phases: Vec::new(),
            params: spec.derived_params(&self.system, horizon).ok().flatten(),
        };
        for r in self
            .records
            .iter()
            .filter(|r| r.learner == learner && r.horizon == horizon)
        {
            if let Ok(data) = &r.outcome {
                curve.regret.push(self.regret_estimate(data, horizon));
                curve.seeds.push(r.seed);
                curve.aborted.push(data.abort.is_some());
                curve.warmup_phases.push(data.warmup_phases);
            }
        }
        Ok(curve)
    }

    /// Per-checkpoint regret of one run: plain `Σc − tJ⋆`, or with the oracle control
    /// variate `Σc − Σc_oracle + E Σc_oracle − tJ⋆` when enabled. Both are unbiased.
    fn regret_estimate(&self, data: &RunData, horizon: usize) -> Vec<f64> {
        let plain = data.checkpoints.iter().map(|&(t, c)| c - t as f64 * self.j_star);
        match (&data.oracle, self.oracle_expected.get(&horizon)) {
            (Some(oracle), Some(expected)) => plain
                .zip(oracle.iter().zip(expected))
                .map(|(r, (o, e))| r - o + e)
                .collect(),
            _ => plain.collect(),
        }
    }

    /// Final regret of every successful seed, per horizon.
    pub fn samples(&self, learner: usize) -> Result<RegretSamples> {
        let grid = self.config.experiment.t_grid.clone();
        let per_t = grid
            .iter()
            .map(|&t| {
                self.curve(learner, t)
                    .map(|c| c.regret.iter().map(|r| *r.last().unwrap()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        RegretSamples::new(grid, per_t)
    }

    pub fn learner_index(&self, name: &str) -> Option<usize> {
        self.config.learners.iter().position(|l| l.label() == name)
    }

    /// `learner,T,seed,checkpoint,cum_cost,cum_regret,aborted`, one row per checkpoint of each completed run.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["learner", "T", "seed", "checkpoint", "cum_cost", "cum_regret", "aborted"])?;
        for r in &self.records {
            let Ok(data) = &r.outcome else { continue };
            let name = self.config.learners[r.learner].label();
            for &(t, c) in &data.checkpoints {
                let aborted = data.abort.is_some_and(|a| a.t <= t);
                w.write_record([
                    name.clone(),
                    r.horizon.to_string(),
                    r.seed.to_string(),
                    t.to_string(),
                    c.to_string(),
                    (c - t as f64 * self.j_star).to_string(),
                    u8::from(aborted).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> Result<ExperimentSummary> {
        let grid = &self.config.experiment.t_grid;
        let mut learners = Vec::new();
        let mut failures = Vec::new();
        for (li, spec) in self.config.learners.iter().enumerate() {
            let mut horizons = Vec::new();
            for &t in grid {
                let curve = self.curve(li, t)?;
                let finals: Vec<f64> = curve.regret.iter().map(|r| *r.last().unwrap()).collect();
                let failed = self
                    .records
                    .iter()
                    .filter(|r| r.learner == li && r.horizon == t && r.outcome.is_err())
                    .count();
                let warmup_histogram = (spec.kind == LearnerKind::AlgorithmB).then(|| {
                    let mut h = Vec::new();
                    for n in curve.warmup_phases.iter().flatten() {
                        if h.len() <= *n {
                            h.resize(n + 1, 0);
                        }
                        h[*n] += 1;
                    }
                    h
                });
                horizons.push(HorizonSummary {
                    horizon: t,
                    mean_regret: if finals.is_empty() { f64::NAN } else { mean(&finals) },
                    stderr: stderr(&finals),
                    completed: finals.len(),
                    failed,
                    aborted: curve.aborted.iter().filter(|a| **a).count(),
                    params: curve.params.clone(),
                    warmup_histogram,
                });
            }
            let (fits, fit_error) = match self.fits(li) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            learners.push(LearnerSummary {
                name: spec.label(),
                kind: spec.kind,
                mode: matches!(spec.kind, LearnerKind::AlgorithmA | LearnerKind::AlgorithmB)
                    .then_some(spec.mode),
                horizons,
                fits,
                fit_error,
            });
            for r in self.records.iter().filter(|r| r.learner == li) {
                if let Err(e) = &r.outcome {
                    failures.push(Failure {
                        learner: spec.label(),
                        horizon: r.horizon,
                        seed: r.seed,
                        error: e.clone(),
                    });
                }
            }
        }
        Ok(ExperimentSummary {
            j_star: self.j_star,
            system: SystemFile::from_system(&self.system),
            base_seed: self.config.experiment.base_seed,
            n_seeds: self.config.experiment.n_seeds,
            t_grid: grid.clone(),
            learners,
            failures,
        })
    }

    /// Exponent, log² and √T fits of one learner's mean final regret.
    pub fn fits(&self, learner: usize) -> Result<Fits> {
        let samples = self.samples(learner)?;
        let mut rng = RngStream::for_trial(
            self.config.experiment.base_seed,
            0,
            learner as u64,
            Purpose::Bootstrap,
        )?;
        let exponent = fit_exponent(&samples, &mut rng)?;
        let means = samples.means();
        Ok(Fits {
            log_squared: fit_log_squared(&samples.t_grid, &means)?,
            sqrt: fit_sqrt(&samples.t_grid, &means)?,
            exponent,
        })
    }

    /// Write `curves.csv` and `summary.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = std::fs::File::create(dir.join("curves.csv"))?;
        self.write_curves_csv(std::io::BufWriter::new(csv))?;
        let summary = self.summary()?;
        let json = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(json), &summary)?;
        Ok(())
    }
}
