//! Named system generators and the on-disk system format.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::{policy_cost, Controller, LqrSystem};
use crate::error::{LqrError, Result};
use crate::linalg::{from_rows, spectral_radius, to_rows};
use crate::rng::RngStream;

/// Largest accepted `J(K₀)/J⋆` for generated systems.
pub const MAX_COST_RATIO: f64 = 20.0;
const MAX_ATTEMPTS: usize = 10_000;

/// The committed 2×2 benchmark: stable open loop, single input, unit costs.
pub fn benchmark2x2(sigma: f64) -> Result<LqrSystem> {
    LqrSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.0, 0.6]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        sigma,
    )
}

/// Random system with `ρ(A) < 1`, identity costs, stabilizable `(A, B)` and
/// `J(0)/J⋆ ≤ 20`, drawn by rejection from a seeded stream.
pub fn random_system(d: usize, k: usize, seed: u64, sigma: f64) -> Result<LqrSystem> {
    if d == 0 || k == 0 {
        return Err(LqrError::Config("dimensions must be positive".into()));
    }
    let mut rng = RngStream::new(seed, crate::rng::Purpose::Generator as u64);
    let scale = 1.0 / (d as f64).sqrt();
    for _ in 0..MAX_ATTEMPTS {
        let mut a = DMatrix::from_fn(d, d, |_, _| rng.gaussian() * scale);
        let rho = spectral_radius(&a);
        if rho == 0.0 {
            continue;
        }
        // Target spectral radius uniform in [0.3, 0.95).
        a *= (0.3 + 0.65 * rng.uniform()) / rho;
        let b = DMatrix::from_fn(d, k, |_, _| rng.gaussian() * scale);
        let sys = LqrSystem::new(a, b, DMatrix::identity(d, d), DMatrix::identity(k, k), sigma)?;
        let Ok(j_star) = sys.optimal_cost() else { continue };
        let Ok(j0) = policy_cost(&sys, &Controller::zeros(k, d)) else { continue };
        if j0 / j_star <= MAX_COST_RATIO {
            return Ok(sys);
        }
    }
    Err(LqrError::InvalidSystem(format!(
        "no admissible random system after {MAX_ATTEMPTS} draws"
    )))
}

/// Row-major matrices as stored in configuration and system files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl SystemFile {
    pub fn from_system(sys: &LqrSystem) -> Self {
        Self {
            a: to_rows(&sys.a),
            b: to_rows(&sys.b),
            q: to_rows(&sys.q),
            r: to_rows(&sys.r),
            sigma: sys.sigma,
        }
    }

    pub fn to_system(&self) -> Result<LqrSystem> {
        LqrSystem::new(
            matrix("a", &self.a)?,
            matrix("b", &self.b)?,
            matrix("q", &self.q)?,
            matrix("r", &self.r)?,
            self.sigma,
        )
    }
}

pub fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    from_rows(rows).ok_or_else(|| LqrError::Config(format!("matrix '{name}' is empty or ragged")))
}
