//! Seeded, splittable randomness.
//!
//! The generator is ChaCha8 keyed by SHA-256 of `(seed, stream name)`, so every
//! named stream is independent of the order in which other streams are created
//! or consumed. The integer stream is reproducible across platforms; float
//! transforms on top of it (uniform, Box-Muller normal) are plain f64
//! arithmetic plus libm calls and are bitwise stable on a given platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic random stream identified by `(seed, name)`.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    /// Root stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, "root")
    }

    /// Independent stream derived from `(seed, name)`.
    pub fn stream(seed: u64, name: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(name.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Rng {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Sub-stream of this stream's seed. Equivalent to `Rng::stream(self.seed(), name)`.
    pub fn split(&self, name: &str) -> Self {
        Self::stream(self.seed, name)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Uses two u64 draws per sample; the
    /// log argument is shifted into (0, 1] so it never hits zero.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased integer in [0, n) by rejection sampling.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below requires n > 0");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Uniform pick from a non-empty slice.
    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }
}
