//! Ground-truth diagnostics for the high-probability events under which the
//! phased learners are analysed. Test and reporting only; no learner reads these.

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::DerivedParams;
use crate::control::{Controller, LqrSystem};
use crate::error::{LqrError, Result};
use crate::linalg::{mat_vec_into, min_sym_eigenvalue, vector_norm_sq};
use crate::rng::RngStream;
use crate::simulation::Trajectory;

/// Which learner produced the trajectory, with what the replay needs.
#[derive(Debug, Clone)]
pub enum MonitoredLearner {
    /// Unknown `A`, regression of `x_{t+1} − B⋆u_t` on `x_t`.
    UnknownA,
    /// Unknown `B`, regression of `x_{t+1} − A⋆x_t` on `u_t`. `action_noise` must
    /// be a fresh copy of the stream the learner drew `η_t` from.
    UnknownB { k0: Controller, action_noise: RngStream },
}

/// One event with the measured quantity and the threshold it is compared to.
///
/// For upper-bound events `holds` means `value ≤ bound`; for lower-bound
/// (exploration) events it means `value ≥ bound`. `slack` is the signed
/// distance in the passing direction, taken at the tightest time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventCheck {
    pub name: &'static str,
    pub holds: bool,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventDiagnostics {
    pub events: Vec<EventCheck>,
}

impl EventDiagnostics {
    pub fn all_hold(&self) -> bool {
        self.events.iter().all(|e| e.holds)
    }

    pub fn get(&self, name: &str) -> Option<&EventCheck> {
        self.events.iter().find(|e| e.name == name)
    }
}

/// Tracks the tightest point of an event evaluated at several times.
struct Tightest {
    name: &'static str,
    upper: bool,
    worst: Option<(f64, f64, f64)>,
}

impl Tightest {
    fn new(name: &'static str, upper: bool) -> Self {
        Self { name, upper, worst: None }
    }

    fn push(&mut self, value: f64, bound: f64) {
        let slack = if self.upper { bound - value } else { value - bound };
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if self.worst.is_none_or(|(_, _, s)| slack < s) {
            self.worst = Some((value, bound, slack));
        }
    }

    fn finish(self) -> EventCheck {
        let (value, bound, slack) = self.worst.unwrap_or((0.0, 0.0, 0.0));
        EventCheck {
            name: self.name,
            holds: slack >= 0.0,
            value,
            bound,
            slack,
        }
    }
}

fn gram_at_least(
    name: &'static str,
    rows: impl Iterator<Item = (usize, usize)>,
    vectors: &[Vec<f64>],
    sigma: f64,
) -> EventCheck {
    let mut check = Tightest::new(name, false);
    let m = vectors.first().map_or(0, Vec::len);
    for (from, to) in rows {
        // Σ_{from ≤ t < to} v_t v_tᵀ ⪰ (to − from)σ²/40 I, with 1-based t.
        let mut g = DMatrix::zeros(m, m);
        for v in &vectors[from - 1..to - 1] {
            for i in 0..m {
                for j in 0..m {
                    g[(i, j)] += v[i] * v[j];
                }
            }
        }
        check.push(min_sym_eigenvalue(&g), (to - from) as f64 * sigma * sigma / 40.0);
    }
    check.finish()
}

/// Evaluate the good events on a finished trajectory with ground truth `sys`.
///
/// The estimation event is evaluated at every `t` from 1 to `T + 1`; the
/// exploration events at the phase starts in `params`. `vartheta` bounds
/// `‖A⋆‖` or `‖B⋆‖` as in the learner configuration.
pub fn good_event_monitor(
    traj: &Trajectory,
    params: &DerivedParams,
    sys: &LqrSystem,
    vartheta: f64,
    learner: &MonitoredLearner,
) -> Result<EventDiagnostics> {
    let d = sys.state_dim();
    let k = sys.action_dim();
    let horizon = traj.len();
    if traj.state_dim() != d || traj.action_dim() != k {
        return Err(LqrError::DimensionMismatch("trajectory does not match system".into()));
    }
    if horizon != params.horizon {
        return Err(LqrError::DimensionMismatch(format!(
            "trajectory has {horizon} steps, parameters were derived for {}",
            params.horizon
        )));
    }
    let sigma = sys.sigma;
    let tf = horizon as f64;
    let (unknown_b, log_factor) = match learner {
        MonitoredLearner::UnknownA => (false, 3.0),
        MonitoredLearner::UnknownB { .. } => (true, 4.0),
    };
    let m = if unknown_b { k } else { d };
    let (theta_star, rows) = if unknown_b { (&sys.b, k) } else { (&sys.a, d) };

    // E^ols at every t ≥ 1 using data s < t.
    let lambda = params.lambda;
    let mut v = DMatrix::<f64>::identity(m, m) * lambda;
    let mut s = DMatrix::<f64>::zeros(d, m);
    let log_det_v1 = m as f64 * lambda.ln();
    let mut y = vec![0.0; d];
    let mut ols = Tightest::new("ols", true);
    let mut push_ols = |v: &DMatrix<f64>, s: &DMatrix<f64>| -> Result<()> {
        let chol = v
            .clone()
            .cholesky()
            .ok_or_else(|| LqrError::InvariantViolation("Gram matrix lost definiteness".into()))?;
        // Θ̂ = S V⁻¹, so Θ̂ᵀ = V⁻¹ Sᵀ.
        let delta_t = chol.solve(&s.transpose()) - theta_star.transpose();
        let value = (delta_t.transpose() * v * &delta_t).trace();
        let log_ratio = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>() - log_det_v1;
        let bound = 4.0 * sigma * sigma * d as f64 * (log_factor * tf.powi(3)).ln()
            + 4.0 * sigma * sigma * d as f64 * log_ratio
            + 2.0 * lambda * rows as f64 * vartheta * vartheta;
        ols.push(value, bound);
        Ok(())
    };
    push_ols(&v, &s)?;
    for t in 0..horizon {
        let x = traj.state(t);
        let u = traj.action(t);
        let next = traj.state(t + 1);
        let z = if unknown_b {
            mat_vec_into(&sys.a, x, &mut y);
            u
        } else {
            mat_vec_into(&sys.b, u, &mut y);
            x
        };
        for (yi, ni) in y.iter_mut().zip(next) {
            *yi = ni - *yi;
        }
        for i in 0..m {
            for j in 0..m {
                v[(i, j)] += z[i] * z[j];
            }
            for r in 0..d {
                s[(r, i)] += y[r] * z[i];
            }
        }
        push_ols(&v, &s)?;
    }
    let mut events = vec![ols.finish()];

    let states: Vec<Vec<f64>> = (0..horizon).map(|t| traj.state(t).to_vec()).collect();
    let taus: Vec<usize> = (0..=params.n_t).map(|i| params.tau(i)).collect();
    if unknown_b {
        events.push(gram_at_least(
            "x",
            taus.windows(2).map(|w| (w[0], w[1])),
            &states,
            sigma,
        ));
    } else {
        events.push(gram_at_least("x", taus.iter().map(|&t| (1, t)), &states, sigma));
    }

    let noise_cap = sigma * (15.0 * d as f64 * (log_factor * tf).ln()).sqrt();
    let mut w_check = Tightest::new("w", true);
    let max_w = (0..horizon)
        .map(|t| vector_norm_sq(traj.noise(t)))
        .fold(0.0, f64::max)
        .sqrt();
    w_check.push(max_w, noise_cap);
    events.push(w_check.finish());

    if let MonitoredLearner::UnknownB { k0, action_noise } = learner {
        let mut rng = action_noise.clone();
        let mut eta = vec![0.0; k];
        let mut virtual_actions = Vec::with_capacity(horizon);
        let mut max_eta = 0.0f64;
        for x in &states {
            rng.fill_gaussian(sigma, &mut eta);
            max_eta = max_eta.max(vector_norm_sq(&eta));
            let mut u = vec![0.0; k];
            mat_vec_into(&k0.gain, x, &mut u);
            for (ui, e) in u.iter_mut().zip(&eta) {
                *ui += e;
            }
            virtual_actions.push(u);
        }
        events.push(gram_at_least(
            "u",
            taus.iter().map(|&t| (1, t)),
            &virtual_actions,
            sigma,
        ));
        let mut eta_check = Tightest::new("eta", true);
        eta_check.push(max_eta.sqrt(), noise_cap);
        events.push(eta_check.finish());
    }
    Ok(EventDiagnostics { events })
}
