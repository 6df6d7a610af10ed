//! Shared helpers for the integration tests: random inputs and oracles written
//! independently of the library code they check.
#![allow(dead_code)]

use std::path::PathBuf;

use lqr_core::rng::RngStream;
use nalgebra::DMatrix;

pub fn rng(stream: u64) -> RngStream {
    RngStream::new(0x5eed, stream)
}

pub fn gaussian_matrix(rng: &mut RngStream, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gaussian())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Random SPD matrix with eigenvalues in roughly `[0.1, 3]`.
pub fn random_spd(rng: &mut RngStream, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n) / (n as f64).sqrt();
    &g * g.transpose() + DMatrix::identity(n, n) * 0.1
}

/// `A` rescaled to spectral radius `rho`.
pub fn with_radius(a: DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let r = spectral_radius(&a);
    if r == 0.0 {
        a
    } else {
        a * (rho / r)
    }
}

/// `‖P − (Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA)‖₂`, via an LU solve.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let inner = r + b.transpose() * p * b;
    let k = inner.lu().solve(&(b.transpose() * p * a)).unwrap();
    let rhs = q + a.transpose() * p * a - a.transpose() * p * b * k;
    op_norm(&(p - rhs))
}

/// Positive root of `b²p² + (1 − a² − b²)p − 1 = 0`, in the cancellation-free form.
pub fn scalar_root(a: f64, b: f64) -> f64 {
    let c = 1.0 - a * a - b * b;
    2.0 / (c + (c * c + 4.0 * b * b).sqrt())
}

/// Stationary `E‖·‖` cost of `u = kx` on a scalar system, by summing the series.
pub fn scalar_policy_cost(a: f64, b: f64, k: f64, sigma: f64) -> f64 {
    let m = a + b * k;
    sigma * sigma * (1.0 + k * k) / (1.0 - m * m)
}

pub fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
