//! Scaling fits for regret curves.

use serde::{Deserialize, Serialize};

use crate::error::{LqrError, Result};
use crate::rng::RngStream;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Final regrets of every seed, grouped by horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSamples {
    pub t_grid: Vec<usize>,
    /// `per_t[i]` holds one regret per seed at horizon `t_grid[i]`.
    pub per_t: Vec<Vec<f64>>,
}

impl RegretSamples {
    pub fn new(t_grid: Vec<usize>, per_t: Vec<Vec<f64>>) -> Result<Self> {
        if t_grid.len() != per_t.len() {
            return Err(LqrError::DimensionMismatch("one sample set per horizon".into()));
        }
        if t_grid.len() < 3 {
            return Err(LqrError::InsufficientData(format!(
                "need at least 3 horizons, got {}",
                t_grid.len()
            )));
        }
        if per_t.iter().any(Vec::is_empty) {
            return Err(LqrError::InsufficientData("a horizon has no samples".into()));
        }
        if t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] == 0 {
            return Err(LqrError::Config("horizons must be positive and increasing".into()));
        }
        Ok(Self { t_grid, per_t })
    }

    pub fn means(&self) -> Vec<f64> {
        self.per_t.iter().map(|s| mean(s)).collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        self.per_t.iter().map(|s| stderr(s)).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (0 for a single sample).
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Ordinary least squares `y ≈ slope·x + intercept` with its R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LqrError::InsufficientData("need two or more paired points".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LqrError::InsufficientData("regressor has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LineFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub beta: f64,
    /// 95% percentile bootstrap interval.
    pub ci: (f64, f64),
    /// Amount added to every mean before taking logs, if any mean was ≤ 0.
    pub shift: Option<f64>,
    pub means: Vec<f64>,
}

/// Shift that makes all values at least 1 when any is ≤ 0.
fn positivity_shift(means: &[f64]) -> Option<f64> {
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    (lo <= 0.0).then(|| 1.0 - lo)
}

fn log_log_slope(t_grid: &[usize], means: &[f64]) -> Result<(f64, Option<f64>)> {
    let shift = positivity_shift(means);
    let s = shift.unwrap_or(0.0);
    let x: Vec<f64> = t_grid.iter().map(|&t| (t as f64).ln()).collect();
    let y: Vec<f64> = means.iter().map(|m| (m + s).ln()).collect();
    Ok((least_squares(&x, &y)?.slope, shift))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Slope of `log(mean regret)` against `log T`, with a bootstrap interval that
/// resamples seeds independently at each horizon.
pub fn fit_exponent(samples: &RegretSamples, rng: &mut RngStream) -> Result<ExponentFit> {
    fit_exponent_with(samples, rng, BOOTSTRAP_RESAMPLES)
}

pub fn fit_exponent_with(
    samples: &RegretSamples,
    rng: &mut RngStream,
    resamples: usize,
) -> Result<ExponentFit> {
    let means = samples.means();
    let (beta, shift) = log_log_slope(&samples.t_grid, &means)?;
    let mut betas = Vec::with_capacity(resamples);
    let mut boot_means = vec![0.0; means.len()];
    for _ in 0..resamples {
        for (bm, s) in boot_means.iter_mut().zip(&samples.per_t) {
            let n = s.len();
            *bm = (0..n).map(|_| s[rng.index(n)]).sum::<f64>() / n as f64;
        }
        betas.push(log_log_slope(&samples.t_grid, &boot_means)?.0);
    }
    let ci = if betas.is_empty() {
        (beta, beta)
    } else {
        betas.sort_by(f64::total_cmp);
        (percentile(&betas, 0.025), percentile(&betas, 0.975))
    };
    Ok(ExponentFit { beta, ci, shift, means })
}

/// `R(T) ≈ c·g(T) + c₀` for a fixed basis function `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub c: f64,
    pub c0: f64,
    pub r2: f64,
}

fn fit_basis(t_grid: &[usize], means: &[f64], g: impl Fn(f64) -> f64) -> Result<ModelFit> {
    if t_grid.len() < 3 {
        return Err(LqrError::InsufficientData("need at least 3 horizons".into()));
    }
    let x: Vec<f64> = t_grid.iter().map(|&t| g(t as f64)).collect();
    let f = least_squares(&x, means)?;
    Ok(ModelFit {
        c: f.slope,
        c0: f.intercept,
        r2: f.r2,
    })
}

/// Fit `R(T) ≈ c·log²T + c₀` to mean regrets.
pub fn fit_log_squared(t_grid: &[usize], means: &[f64]) -> Result<ModelFit> {
    fit_basis(t_grid, means, |t| t.ln().powi(2))
}

/// Fit `R(T) ≈ c·√T + c₀` to mean regrets.
pub fn fit_sqrt(t_grid: &[usize], means: &[f64]) -> Result<ModelFit> {
    fit_basis(t_grid, means, f64::sqrt)
}

/// Final-horizon regrets per learner from a curves CSV
/// (`learner,T,seed,checkpoint,cum_cost,cum_regret,aborted`). Rows whose
/// checkpoint differs from `T` are ignored.
pub fn read_final_regrets<R: std::io::Read>(
    input: R,
) -> Result<std::collections::BTreeMap<String, RegretSamples>> {
    use std::collections::BTreeMap;
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LqrError::Config(format!("curves file lacks column '{name}'")))
    };
    let (c_learner, c_t, c_cp, c_regret) = (col("learner")?, col("T")?, col("checkpoint")?, col("cum_regret")?);
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_usize = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|e| LqrError::Config(format!("bad integer '{}': {e}", &rec[i])))
        };
        let t = parse_usize(c_t)?;
        if parse_usize(c_cp)? != t {
            continue;
        }
        let regret: f64 = rec[c_regret]
            .parse()
            .map_err(|e| LqrError::Config(format!("bad number '{}': {e}", &rec[c_regret])))?;
        grouped
            .entry(rec[c_learner].to_string())
            .or_default()
            .entry(t)
            .or_default()
            .push(regret);
    }
    grouped
        .into_iter()
        .map(|(name, by_t)| {
            let (grid, per_t): (Vec<usize>, Vec<Vec<f64>>) = by_t.into_iter().unzip();
            Ok((name, RegretSamples::new(grid, per_t)?))
        })
        .collect()
}
