//! Empirical estimates of the perturbation constants `C₀` and `ε₀`.
//!
//! For each `ε` on a grid, random perturbations `Δ` with `‖Δ‖ = ε` are applied
//! to the unknown matrix, the certainty-equivalent gain is synthesized, and
//! the ratios `(J(K) − J⋆)/ε²` and `‖K − K⋆‖/ε` are recorded. `ε₀` is the
//! largest grid value up to which every sample is stabilizing and the worst
//! cost ratio stays within 20% of its value at the smallest `ε`; `C₀` is the
//! largest ratio seen up to `ε₀`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::control::{policy_cost, synthesize, LqrSystem};
use crate::error::{LqrError, Result};
use crate::linalg::{op_norm, spectral_radius};
use crate::rng::RngStream;

/// Relative tolerance on the quadratic cost fit.
pub const FIT_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbed {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub eps: f64,
    /// Worst `(J(K) − J⋆)/ε²` over the samples.
    pub cost_ratio: f64,
    /// Worst `‖K − K⋆‖/ε` over the samples.
    pub gain_ratio: f64,
    pub all_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub c0: f64,
    pub eps0: f64,
    pub rows: Vec<CalibrationRow>,
}

/// Geometric grid from `lo` to `hi` with `n ≥ 2` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

pub fn calibrate(
    sys: &LqrSystem,
    which: Perturbed,
    eps_grid: &[f64],
    samples: usize,
    rng: &mut RngStream,
) -> Result<Calibration> {
    if eps_grid.is_empty() || samples == 0 {
        return Err(LqrError::InsufficientData("empty grid or no samples".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] >= w[1]) || eps_grid[0] <= 0.0 {
        return Err(LqrError::Config("eps grid must be positive and increasing".into()));
    }
    let j_star = sys.optimal_cost()?;
    let k_star = sys.optimal_controller()?;
    let target = match which {
        Perturbed::A => &sys.a,
        Perturbed::B => &sys.b,
    };
    let (r, c) = target.shape();
    // One set of unit directions shared by every ε keeps the ratios comparable across the grid.
    let directions: Vec<DMatrix<f64>> = (0..samples)
        .map(|_| DMatrix::from_fn(r, c, |_, _| rng.gaussian()))
        .filter_map(|d| {
            let n = op_norm(&d);
            (n > 0.0).then(|| d / n)
        })
        .collect();
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let mut row = CalibrationRow {
            eps,
            cost_ratio: 0.0,
            gain_ratio: 0.0,
            all_stable: true,
        };
        for dir in &directions {
            let delta = dir * eps;
            let (a, b) = match which {
                Perturbed::A => (&sys.a + &delta, sys.b.clone()),
                Perturbed::B => (sys.a.clone(), &sys.b + &delta),
            };
            let k = match synthesize(&a, &b, &sys.q, &sys.r) {
                Ok(k) if spectral_radius(&sys.closed_loop(&k)) < 1.0 => k,
                _ => {
                    row.all_stable = false;
                    continue;
                }
            };
            match policy_cost(sys, &k) {
                Ok(j) => {
                    row.cost_ratio = row.cost_ratio.max((j - j_star).max(0.0) / (eps * eps));
                    row.gain_ratio = row.gain_ratio.max(op_norm(&(&k.gain - &k_star.gain)) / eps);
                }
                Err(_) => row.all_stable = false,
            }
        }
        rows.push(row);
    }
    let reference = rows[0].cost_ratio;
    let mut eps0 = None;
    let mut c0 = 0.0f64;
    for row in &rows {
        let fits = row.all_stable
            && (row.cost_ratio - reference).abs() <= FIT_TOLERANCE * reference.max(f64::MIN_POSITIVE);
        if !fits {
            break;
        }
        eps0 = Some(row.eps);
        c0 = c0.max(row.cost_ratio).max(row.gain_ratio);
    }
    let eps0 = eps0.ok_or_else(|| {
        LqrError::InsufficientData("no grid value passed the quadratic fit; use a smaller grid".into())
    })?;
    Ok(Calibration { c0, eps0, rows })
}
