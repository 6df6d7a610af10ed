//! Experiment configuration, Monte Carlo execution, output and fitting.

pub mod config;
pub mod fit;
pub mod run;
pub mod systems;

pub use config::{ExperimentConfig, LearnerKind, LearnerSpec, SystemSpec};
pub use fit::{fit_exponent, fit_log_squared, fit_sqrt, ExponentFit, ModelFit, RegretSamples};
pub use run::{run_experiment, ExperimentResult, RegretCurve};
