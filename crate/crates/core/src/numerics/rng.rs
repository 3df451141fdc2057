use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Identifier written into checkpoints next to the serialized state.
pub const RNG_ALGORITHM: &str = "chacha8-v1";

const STATE_LEN: usize = 8 + 8 + 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Gaussian01,
    Uniform01,
}

/// Deterministic random stream: ChaCha8 keyed by `seed_from_u64(seed)`,
/// with the ChaCha stream id selecting independent sub-streams.
///
/// Uniforms are the top 53 bits of a `u64` scaled to `[0, 1)`. Gaussians
/// come from the Box–Muller transform of consecutive uniform pairs; an odd
/// request discards the second value of the last pair, so nothing is cached
/// between calls and the serialized state is just the ChaCha position.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.state_bytes() == other.state_bytes()
    }
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// A fresh stream sharing this seed but with a different stream id.
    /// Derived streams start at position zero and never overlap the parent.
    pub fn derive(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn algorithm_id(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Seed, stream id and word position, little-endian.
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STATE_LEN);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out
    }

    pub fn from_state_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != STATE_LEN {
            return Err(Error::Precondition(alloc::format!(
                "rng state must be {STATE_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let seed = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let stream = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let pos = u128::from_le_bytes(bytes[16..32].try_into().unwrap());
        let mut s = Self::with_stream(seed, stream);
        s.rng.set_word_pos(pos);
        Ok(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (`n > 0`), by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    fn box_muller(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        (radius * libm::cos(angle), radius * libm::sin(angle))
    }

    pub fn sample(&mut self, dist: Distribution, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        match dist {
            Distribution::Uniform01 => {
                for _ in 0..n {
                    out.push(self.uniform01());
                }
            }
            Distribution::Gaussian01 => {
                while out.len() < n {
                    let (a, b) = self.box_muller();
                    out.push(a);
                    if out.len() < n {
                        out.push(b);
                    }
                }
            }
        }
        out
    }

    pub fn gaussian(&mut self, n: usize) -> Vec<f64> {
        self.sample(Distribution::Gaussian01, n)
    }

    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        self.sample(Distribution::Uniform01, n)
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_raw(rows, cols, self.gaussian(rows * cols))
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_raw(rows, cols, self.uniform(rows * cols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_request_leaves_stream_untouched() {
        let mut s = RngStream::new(3);
        let before = s.clone();
        assert!(s.sample(Distribution::Gaussian01, 0).is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = RngStream::new(42).gaussian(1000);
        let b = RngStream::new(42).gaussian(1000);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_moments() {
        let v = RngStream::new(42).gaussian(1_000_000);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn state_round_trip_resumes_sequence() {
        let mut s = RngStream::with_stream(7, 5);
        s.gaussian(13);
        let saved = s.state_bytes();
        let tail = s.clone().uniform(20);
        let mut restored = RngStream::from_state_bytes(&saved).unwrap();
        assert_eq!(restored.uniform(20), tail);
    }

    #[test]
    fn derived_streams_differ() {
        let base = RngStream::new(1);
        let a = base.derive(1).uniform(8);
        let b = base.derive(2).uniform(8);
        assert_ne!(a, b);
    }
}
