//! Exact control-theoretic primitives: the discrete algebraic Riccati equation,
//! the closed-loop Lyapunov equation, optimal feedback synthesis and the
//! cost-based strong-stability certificate.
//!
//! The Riccati solver is plain value iteration started at `P = Q`. It is
//! certified by recomputing the fixed-point residual of the returned matrix in
//! operator norm, so a caller never sees a `P` that does not solve the
//! equation to the requested tolerance. A doubling/structured solver would
//! slot in behind the same signature.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LqrError, Result};
use crate::linalg::{self, op_norm, symmetrize_in_place};

pub use crate::linalg::spectral_radius;

pub const DEFAULT_DARE_TOL: f64 = 1e-10;
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;
/// Closed loops with spectral radius at or above `1 - UNSTABLE_MARGIN` have no finite cost.
pub const UNSTABLE_MARGIN: f64 = 1e-9;
const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITER: usize = 10_000_000;
const LYAPUNOV_GROWTH_WINDOW: usize = 1000;

/// Linear dynamics `x' = A x + B u + w`, `w ~ N(0, σ² I)`, with stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma: f64,
}

impl LqrSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma: f64,
    ) -> Result<Self> {
        let sys = Self { a, b, q, r, sigma };
        sys.validate()?;
        Ok(sys)
    }

    /// Scalar system `x' = a x + b u + w` with unit costs.
    pub fn scalar(a: f64, b: f64, sigma: f64) -> Result<Self> {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            one.clone(),
            one,
            sigma,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.nrows();
        if d == 0 || !self.a.is_square() {
            return Err(LqrError::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        let k = self.b.ncols();
        if self.b.nrows() != d || k == 0 {
            return Err(LqrError::DimensionMismatch(format!(
                "B must be {d}xk with k > 0, got {}x{}",
                self.b.nrows(),
                k
            )));
        }
        if self.q.shape() != (d, d) {
            return Err(LqrError::DimensionMismatch(format!("Q must be {d}x{d}")));
        }
        if self.r.shape() != (k, k) {
            return Err(LqrError::DimensionMismatch(format!("R must be {k}x{k}")));
        }
        let all_finite = [&self.a, &self.b, &self.q, &self.r]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(LqrError::InvalidSystem("non-finite matrix entry".into()));
        }
        for (name, m) in [("Q", &self.q), ("R", &self.r)] {
            if linalg::asymmetry(m) > 1e-12 {
                return Err(LqrError::InvalidSystem(format!("{name} is not symmetric")));
            }
            if linalg::min_sym_eigenvalue(m) <= 0.0 {
                return Err(LqrError::InvalidSystem(format!(
                    "{name} is not positive definite"
                )));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LqrError::InvalidSystem(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Same costs and noise, different transition matrices.
    pub fn with_dynamics(&self, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, self.q.clone(), self.r.clone(), self.sigma)
    }

    pub fn closed_loop(&self, k: &Controller) -> DMatrix<f64> {
        &self.a + &self.b * &k.gain
    }

    /// Optimal average cost `J⋆ = σ² tr(P⋆)`.
    pub fn optimal_cost(&self) -> Result<f64> {
        let p = solve_dare(self, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)?;
        Ok(self.sigma * self.sigma * p.p.trace())
    }

    /// Optimal controller `K⋆` with default solver settings.
    pub fn optimal_controller(&self) -> Result<Controller> {
        let p = solve_dare(self, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)?;
        optimal_controller(self, &p)
    }
}

/// Linear state feedback `u = K x`, `K` is k×d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub gain: DMatrix<f64>,
}

impl Controller {
    pub fn new(gain: DMatrix<f64>) -> Self {
        Self { gain }
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            gain: DMatrix::zeros(k, d),
        }
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.gain)
    }

    pub fn check_dims(&self, sys: &LqrSystem) -> Result<()> {
        let want = (sys.action_dim(), sys.state_dim());
        if self.gain.shape() != want {
            return Err(LqrError::DimensionMismatch(format!(
                "controller is {:?}, system needs {:?}",
                self.gain.shape(),
                want
            )));
        }
        Ok(())
    }
}

/// Witness `(κ, γ)` of strong stability: `‖(A+BK)^s‖ ≤ κ(1−γ)^s` and `‖K‖ ≤ κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub kappa: f64,
    pub gamma: f64,
}

impl StabilityCertificate {
    /// The decay envelope `κ(1−γ)^s`.
    pub fn envelope(&self, s: u32) -> f64 {
        self.kappa * (1.0 - self.gamma).powi(s as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// `‖P − Ric(P)‖` in operator norm for the returned `P`.
    pub residual: f64,
    pub iterations: usize,
}

/// Right-hand side of the Riccati equation, `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let inner = r + b.transpose() * &pb;
    let chol = inner
        .cholesky()
        .ok_or(LqrError::SingularInnerMatrix)?;
    // AᵀPB = (BᵀPA)ᵀ for symmetric P.
    let bt_pa = b.transpose() * &pa;
    let gain_part = chol.solve(&bt_pa);
    Ok(q + a.transpose() * &pa - bt_pa.transpose() * gain_part)
}

/// Residual `‖P − Ric(P)‖` in operator norm.
pub fn dare_residual(sys: &LqrSystem, p: &DMatrix<f64>) -> Result<f64> {
    let next = riccati_map(&sys.a, &sys.b, &sys.q, &sys.r, p)?;
    Ok(op_norm(&(p - next)))
}

/// Solve the DARE by value iteration from `P = Q`, re-symmetrizing every iterate.
pub fn solve_dare(sys: &LqrSystem, tol: f64, max_iter: usize) -> Result<RiccatiSolution> {
    solve_dare_matrices(&sys.a, &sys.b, &sys.q, &sys.r, tol, max_iter)
}

pub fn solve_dare_matrices(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    if !(tol > 0.0) {
        return Err(LqrError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut p = q.clone();
    let mut last_step = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = riccati_map(a, b, q, r, &p)?;
        symmetrize_in_place(&mut next);
        if !next.iter().all(|v| v.is_finite()) || next.amax() > 1e300 {
            return Err(LqrError::NonConvergence {
                residual: f64::INFINITY,
                iterations: it,
            });
        }
        // Frobenius bounds the operator norm from above, so this test is conservative.
        last_step = (&next - &p).norm();
        p = next;
        // Relative to ‖P‖ once it exceeds one: rounding alone leaves steps of order 1e-16·‖P‖.
        let scaled = tol * p.amax().max(1.0);
        if last_step <= scaled {
            let residual = op_norm(&(&p - riccati_map(a, b, q, r, &p)?));
            if residual <= scaled {
                return Ok(polish(a, b, q, r, p, last_step, tol, it, max_iter));
            }
        }
    }
    Err(LqrError::NonConvergence {
        residual: last_step,
        iterations: max_iter,
    })
}

/// A small step only bounds the distance to the fixed point by `step·r/(1−r)`
/// for contraction rate `r`, so iteration continues while the step keeps
/// shrinking, down to `tol/100` or rounding level. Never worse than the input.
#[allow(clippy::too_many_arguments)]
fn polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut p: DMatrix<f64>,
    mut step: f64,
    tol: f64,
    mut it: usize,
    max_iter: usize,
) -> RiccatiSolution {
    while step > tol * 1e-2 && it < max_iter {
        let Ok(mut next) = riccati_map(a, b, q, r, &p) else { break };
        symmetrize_in_place(&mut next);
        let s = (&next - &p).norm();
        if !(s < step) {
            break;
        }
        p = next;
        step = s;
        it += 1;
    }
    let residual = riccati_map(a, b, q, r, &p).map_or(step, |n| op_norm(&(&p - n)));
    RiccatiSolution {
        p,
        residual,
        iterations: it,
    }
}

/// `K = −(R + BᵀPB)⁻¹ BᵀPA`.
pub fn optimal_controller(sys: &LqrSystem, sol: &RiccatiSolution) -> Result<Controller> {
    optimal_gain(&sys.a, &sys.b, &sys.r, &sol.p)
}

pub fn optimal_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<Controller> {
    let bt_p = b.transpose() * p;
    let inner = r + &bt_p * b;
    let chol = inner.cholesky().ok_or(LqrError::SingularInnerMatrix)?;
    let gain = -chol.solve(&(bt_p * a));
    Ok(Controller { gain })
}

/// Certainty-equivalent synthesis: optimal gain for the model `(A, B)` under the costs `(Q, R)`.
pub fn synthesize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Controller> {
    let sol = solve_dare_matrices(a, b, q, r, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)?;
    optimal_gain(a, b, r, &sol.p)
}

/// Solve `P = C + Mᵀ P M` by fixed-point iteration for a stable `M`.
///
/// Stops once the geometric tail estimate `‖Δ‖·r/(1−r)` (with `r` the observed
/// contraction ratio) drops below `1e-12` relative to `‖P‖`. The iteration is
/// declared divergent if the trace keeps growing for 1000 consecutive steps
/// after it should have contracted.
pub fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(m);
    if rho >= 1.0 - UNSTABLE_MARGIN {
        return Err(LqrError::UnstableController { spectral_radius: rho });
    }
    let mt = m.transpose();
    let mut p = c.clone();
    let mut prev_step = f64::INFINITY;
    let mut growth_run = 0usize;
    let mut prev_trace = p.trace();
    for it in 0..LYAPUNOV_MAX_ITER {
        let mut next = c + &mt * &p * m;
        symmetrize_in_place(&mut next);
        let step = (&next - &p).norm();
        let scale = next.norm().max(1e-300);
        let ratio = if prev_step.is_finite() && prev_step > 0.0 {
            (step / prev_step).min(1.0 - 1e-15)
        } else {
            rho * rho
        };
        let tail = step * ratio / (1.0 - ratio);
        let tr = next.trace();
        // The trace of the partial sums grows monotonically; what matters is
        // whether the increments keep failing to shrink.
        if tr > prev_trace && step >= prev_step {
            growth_run += 1;
        } else {
            growth_run = 0;
        }
        p = next;
        if !p.iter().all(|v| v.is_finite()) || growth_run >= LYAPUNOV_GROWTH_WINDOW {
            return Err(LqrError::NonConvergence {
                residual: step,
                iterations: it,
            });
        }
        if step <= LYAPUNOV_TOL * scale && tail <= LYAPUNOV_TOL * scale {
            return Ok(p);
        }
        prev_step = step;
        prev_trace = tr;
    }
    Err(LqrError::NonConvergence {
        residual: prev_step,
        iterations: LYAPUNOV_MAX_ITER,
    })
}

/// Value matrix of a fixed linear policy: `P = Q + KᵀRK + (A+BK)ᵀP(A+BK)`.
pub fn policy_value_matrix(sys: &LqrSystem, k: &Controller) -> Result<DMatrix<f64>> {
    k.check_dims(sys)?;
    let m = sys.closed_loop(k);
    let c = &sys.q + k.gain.transpose() * &sys.r * &k.gain;
    solve_lyapunov(&m, &c)
}

/// Infinite-horizon average cost `tr(P W)` of `u = Kx` under noise covariance `W`.
pub fn infinite_horizon_cost(sys: &LqrSystem, k: &Controller, noise_cov: &DMatrix<f64>) -> Result<f64> {
    let d = sys.state_dim();
    if noise_cov.shape() != (d, d) {
        return Err(LqrError::DimensionMismatch(format!(
            "noise covariance must be {d}x{d}"
        )));
    }
    let p = policy_value_matrix(sys, k)?;
    Ok((p * noise_cov).trace())
}

/// `J(K)` under the system's own noise `σ² I`.
pub fn policy_cost(sys: &LqrSystem, k: &Controller) -> Result<f64> {
    let d = sys.state_dim();
    let w = DMatrix::identity(d, d) * (sys.sigma * sys.sigma);
    infinite_horizon_cost(sys, k, &w)
}

/// Exact `E Σ_{s ≤ t} c_s` under `u = Kx` from `x_1 = 0`, at each of the sorted `times`.
pub fn expected_cumulative_cost(sys: &LqrSystem, k: &Controller, times: &[usize]) -> Result<Vec<f64>> {
    k.check_dims(sys)?;
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(LqrError::Config("checkpoint times must be sorted".into()));
    }
    let d = sys.state_dim();
    let m = sys.closed_loop(k);
    let c = &sys.q + k.gain.transpose() * &sys.r * &k.gain;
    let w = DMatrix::identity(d, d) * (sys.sigma * sys.sigma);
    let mut cov = DMatrix::zeros(d, d);
    let mut total = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0;
    for &target in times {
        while t < target {
            total += (&c * &cov).trace();
            cov = &m * &cov * m.transpose() + &w;
            t += 1;
        }
        out.push(total);
    }
    Ok(out)
}

/// Strong-stability certificate of any controller with `J(K) ≤ J_bound`:
/// `κ = √(J/(α₀σ²))`, `γ = α₀σ²/(2J)`.
pub fn certificate_from_cost(j_bound: f64, alpha0: f64, sigma: f64) -> Result<StabilityCertificate> {
    if !(alpha0 > 0.0 && sigma > 0.0) {
        return Err(LqrError::InvalidBound(format!(
            "alpha0 and sigma must be positive (alpha0 = {alpha0}, sigma = {sigma})"
        )));
    }
    let floor = alpha0 * sigma * sigma;
    if !(j_bound >= floor) || !j_bound.is_finite() {
        return Err(LqrError::InvalidBound(format!(
            "cost bound {j_bound} is below alpha0 * sigma^2 = {floor}"
        )));
    }
    Ok(StabilityCertificate {
        kappa: (j_bound / floor).sqrt(),
        gamma: floor / (2.0 * j_bound),
    })
}
