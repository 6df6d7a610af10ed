//! Counter-based Gaussian streams.
//!
//! Every random quantity in a run comes from a ChaCha8 keystream addressed by
//! `(seed, stream_id)`. The keystream is a pure function of key, stream and
//! block counter, so a stream can be regenerated anywhere (the good-event
//! monitor replays the exploration noise of a learner this way) and distinct
//! stream ids never share blocks.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LqrError, Result};

/// What a stream is used for inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// System noise `w_t`.
    SystemNoise = 0,
    /// Injected action noise `η_t` of the noisy warm-up.
    ActionNoise = 1,
    /// Exploration noise of the ε-greedy baseline.
    Exploration = 2,
    /// Sign draw of the lower-bound family.
    Sign = 3,
    /// Bootstrap resampling in the fitting code.
    Bootstrap = 4,
    /// Random system generation and calibration sampling.
    Generator = 5,
}

const HORIZON_BITS: u32 = 40;
const TRIAL_BITS: u32 = 20;
const PURPOSE_BITS: u32 = 4;

/// Injective packing of `(horizon, trial, purpose)` into a 64-bit stream id.
pub fn stream_id(horizon: u64, trial: u64, purpose: Purpose) -> Result<u64> {
    if horizon >= 1 << HORIZON_BITS {
        return Err(LqrError::Config(format!("horizon {horizon} exceeds 2^40")));
    }
    if trial >= 1 << TRIAL_BITS {
        return Err(LqrError::Config(format!("trial index {trial} exceeds 2^20")));
    }
    Ok((horizon << (TRIAL_BITS + PURPOSE_BITS)) | (trial << PURPOSE_BITS) | purpose as u64)
}

/// A reproducible stream of uniforms and standard normals.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    core: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut core = ChaCha8Rng::from_seed(key);
        core.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            core,
            spare: None,
        }
    }

    /// Stream for `purpose` of trial `trial` at horizon `horizon` under `base_seed`.
    pub fn for_trial(base_seed: u64, horizon: u64, trial: u64, purpose: Purpose) -> Result<Self> {
        Ok(Self::new(base_seed, stream_id(horizon, trial, purpose)?))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box–Muller; the second variate of each pair is cached.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 − U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill `out` with independent `N(0, scale²)` draws.
    pub fn fill_gaussian(&mut self, scale: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = scale * self.gaussian();
        }
    }

    /// ±1 with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_address_identical_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..1000 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let mut c = RngStream::new(8, 3);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn stream_ids_are_injective_on_a_grid() {
        let mut seen = std::collections::HashSet::new();
        for h in [1u64, 2, 4096, 1 << 20, (1 << 40) - 1] {
            for trial in [0u64, 1, 99, (1 << 20) - 1] {
                for p in [Purpose::SystemNoise, Purpose::ActionNoise, Purpose::Exploration, Purpose::Sign] {
                    assert!(seen.insert(stream_id(h, trial, p).unwrap()));
                }
            }
        }
        assert!(stream_id(1 << 40, 0, Purpose::SystemNoise).is_err());
        assert!(stream_id(1, 1 << 20, Purpose::SystemNoise).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(1, 0);
        let n = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = rng.gaussian();
            s1 += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
        let n = n as f64;
        assert!((s1 / n).abs() < 0.01);
        assert!((s2 / n - 1.0).abs() < 0.01);
        assert!((s4 / n - 3.0).abs() < 0.06);
    }

    #[test]
    fn uniform_range_and_index() {
        let mut rng = RngStream::new(2, 9);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.index(7) < 7);
        }
    }
}
