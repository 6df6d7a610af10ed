//! Online learning for linear-quadratic control with one unknown system matrix.
//!
//! The crate provides a Riccati/Lyapunov toolkit, a ridge-regression
//! estimator, seeded rollouts, two phased certainty-equivalence learners with
//! a safe fallback, baselines, a scalar lower-bound instance family and a
//! Monte Carlo harness for regret curves.

pub mod control;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod lowerbound;
pub mod rng;
pub mod simulation;

pub use control::{Controller, LqrSystem, RiccatiSolution, StabilityCertificate};
pub use error::{LqrError, Result};
