//! Online ridge regression for transition matrices.
//!
//! Observations follow `y = Θ⋆ z + w` with `Θ⋆` of shape d×m. The estimator
//! keeps the regularized Gram `V = λI + Σ z zᵀ` and the cross moment
//! `S = Σ y zᵀ`; the estimate `Θ̂ = S V⁻¹` is recomputed by a Cholesky solve
//! whenever asked for. Learners only ask at phase boundaries, so the cubic
//! solve is paid O(log T) times per run.

use nalgebra::{DMatrix, DVector};

use crate::error::{LqrError, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct RlsEstimator {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    lambda: f64,
    samples: usize,
}

impl RlsEstimator {
    /// Fresh estimator for a d×m parameter matrix with ridge `lambda > 0`.
    pub fn new(d: usize, m: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(LqrError::Config(format!(
                "ridge parameter must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            gram: DMatrix::identity(m, m) * lambda,
            cross: DMatrix::zeros(d, m),
            lambda,
            samples: 0,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.cross.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Regularized Gram `V_t`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Cross moment `Σ y zᵀ`.
    pub fn cross_moment(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// Rank-one update `V += z zᵀ`, `S += y zᵀ`.
    pub fn update(&mut self, z: &[f64], y: &[f64]) -> Result<()> {
        let m = self.input_dim();
        let d = self.output_dim();
        if z.len() != m || y.len() != d {
            return Err(LqrError::DimensionMismatch(format!(
                "estimator expects z in R^{m}, y in R^{d}; got {} and {}",
                z.len(),
                y.len()
            )));
        }
        for j in 0..m {
            let zj = z[j];
            if zj == 0.0 {
                continue;
            }
            for i in 0..m {
                self.gram[(i, j)] += z[i] * zj;
            }
            for i in 0..d {
                self.cross[(i, j)] += y[i] * zj;
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Pseudo-observations of `theta` with total weight `weight` along every
    /// input direction: `V += weight·I`, `S += weight·Θ`. The sample count is
    /// unchanged. With no real data the estimate becomes `weight/(λ+weight)·Θ`.
    pub fn prime(&mut self, theta: &DMatrix<f64>, weight: f64) -> Result<()> {
        if theta.shape() != self.cross.shape() {
            return Err(LqrError::DimensionMismatch(format!(
                "prior must be {}x{}",
                self.output_dim(),
                self.input_dim()
            )));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(LqrError::Config(format!("prior weight must be positive, got {weight}")));
        }
        for i in 0..self.input_dim() {
            self.gram[(i, i)] += weight;
        }
        self.cross += theta * weight;
        Ok(())
    }

    /// `Θ̂ = S V⁻¹`, computed as the solution of `V Θ̂ᵀ = Sᵀ`.
    ///
    /// Data from a diverging closed loop can make `V` too badly scaled for a
    /// Cholesky factorization; the solve then goes through the symmetric
    /// eigendecomposition, and non-finite data yields a non-finite estimate.
    pub fn estimate(&self) -> DMatrix<f64> {
        let rhs = self.cross.transpose();
        if let Some(chol) = self.gram.clone().cholesky() {
            return chol.solve(&rhs).transpose();
        }
        let m = self.input_dim();
        if self.gram.iter().any(|v| !v.is_finite()) {
            return DMatrix::from_element(self.output_dim(), m, f64::NAN);
        }
        let eig = self.gram.clone().symmetric_eigen();
        let floor = self.lambda;
        let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.max(floor)));
        (&eig.eigenvectors * inv * eig.eigenvectors.transpose() * rhs).transpose()
    }

    /// Right-hand side of the self-normalized bound on `tr(Δᵀ V_t Δ)`:
    /// `4σ²d·log((d/δ)·det V_t / det V_1) + 2λ·‖Θ⋆‖²_F`.
    ///
    /// `theta_frob_sq` is the caller's bound on `‖Θ⋆‖²_F`.
    pub fn confidence_bound(&self, delta: f64, sigma: f64, d: usize, theta_frob_sq: f64) -> f64 {
        debug_assert!(delta > 0.0 && delta <= 1.0);
        let log_ratio = self.log_det_ratio();
        4.0 * sigma * sigma * d as f64 * ((d as f64 / delta).ln() + log_ratio)
            + 2.0 * self.lambda * theta_frob_sq
    }

    /// `log det V_t − log det V_1` with `V_1 = λI`.
    pub fn log_det_ratio(&self) -> f64 {
        let m = self.input_dim() as f64;
        let ld = linalg::log_det_spd(&self.gram).unwrap_or_else(|| {
            linalg::sym_eigenvalues(&self.gram)
                .iter()
                .map(|e| e.max(self.lambda).ln())
                .sum()
        });
        (ld - m * self.lambda.ln()).max(0.0)
    }

    /// Smallest eigenvalue of the unregularized Gram `V − λI`.
    pub fn gram_min_eigenvalue(&self) -> f64 {
        let m = self.input_dim();
        let raw = &self.gram - DMatrix::identity(m, m) * self.lambda;
        linalg::min_sym_eigenvalue(&raw).max(0.0)
    }

    /// `tr(Δᵀ V Δ)` for `Δ = Θ⋆ − Θ̂`; a ground-truth diagnostic.
    pub fn weighted_error(&self, theta_star: &DMatrix<f64>) -> f64 {
        let delta = theta_star - self.estimate();
        (delta.clone() * &self.gram * delta.transpose()).trace()
    }
}

/// Batch ridge solution `(Σ y zᵀ)(λI + Σ z zᵀ)⁻¹` from stored samples.
pub fn batch_ridge(zs: &[DVector<f64>], ys: &[DVector<f64>], lambda: f64) -> DMatrix<f64> {
    let m = zs.first().map_or(0, |z| z.len());
    let d = ys.first().map_or(0, |y| y.len());
    let zmat = DMatrix::from_fn(zs.len(), m, |i, j| zs[i][j]);
    let ymat = DMatrix::from_fn(ys.len(), d, |i, j| ys[i][j]);
    let v = DMatrix::identity(m, m) * lambda + zmat.transpose() * &zmat;
    let rhs = zmat.transpose() * ymat;
    v.lu().solve(&rhs).expect("ridge system is nonsingular").transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_one_arithmetic() {
        let mut est = RlsEstimator::new(1, 2, 1.0).unwrap();
        est.update(&[1.0, 0.0], &[3.0]).unwrap();
        assert_eq!(est.gram(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert_eq!(est.cross_moment(), &DMatrix::from_row_slice(1, 2, &[3.0, 0.0]));
        est.update(&[0.0, 1.0], &[0.0]).unwrap();
        assert_eq!(est.gram(), &(DMatrix::identity(2, 2) * 2.0));
        assert_eq!(est.samples(), 2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut est = RlsEstimator::new(2, 2, 1.0).unwrap();
        assert!(matches!(
            est.update(&[1.0], &[1.0, 2.0]),
            Err(LqrError::DimensionMismatch(_))
        ));
        assert_eq!(est.samples(), 0);
        assert!(RlsEstimator::new(1, 1, 0.0).is_err());
    }

    #[test]
    fn fresh_estimate_is_zero() {
        let est = RlsEstimator::new(3, 2, 0.5).unwrap();
        assert_eq!(est.estimate(), DMatrix::zeros(3, 2));
        assert_eq!(est.gram_min_eigenvalue(), 0.0);
    }

    #[test]
    fn noiseless_interpolation() {
        let theta = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.7]);
        let mut est = RlsEstimator::new(2, 2, 1e-12).unwrap();
        for z in [[1.0, 0.5], [-0.3, 2.0]] {
            let y = &theta * DVector::from_column_slice(&z);
            est.update(&z, y.as_slice()).unwrap();
        }
        assert_relative_eq!(est.estimate(), theta, epsilon = 1e-6);
    }

    #[test]
    fn confidence_bound_at_zero_samples() {
        let est = RlsEstimator::new(2, 3, 2.0).unwrap();
        let (sigma, delta, theta_sq) = (0.5f64, 0.1f64, 3.0);
        let expected = 4.0 * sigma * sigma * 2.0 * (2.0 / delta).ln() + 2.0 * 2.0 * theta_sq;
        assert_relative_eq!(est.confidence_bound(delta, sigma, 2, theta_sq), expected, epsilon = 1e-12);
        let scalar = RlsEstimator::new(1, 1, 1.0).unwrap();
        assert_relative_eq!(scalar.confidence_bound(1.0, 1.0, 1, 0.0), 0.0);
    }

    #[test]
    fn rank_deficient_gram_has_zero_min_eigenvalue() {
        let mut est = RlsEstimator::new(1, 3, 1.0).unwrap();
        for _ in 0..10 {
            est.update(&[1.0, 0.0, 0.0], &[1.0]).unwrap();
        }
        assert!(est.gram_min_eigenvalue().abs() < 1e-12);
        assert!(est.log_det_ratio() > 0.0);
    }
}
