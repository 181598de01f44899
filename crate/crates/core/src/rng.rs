//! Portable seeded randomness.
//!
//! Every stochastic step in the engine (subset sampling, presentation order,
//! ring permutation) draws from ChaCha8 seeded through [`derive_seed`]. The
//! bounded-integer and shuffle routines live here rather than in `rand` so the
//! output stream is fixed by this crate alone and reproduces across platforms
//! and dependency upgrades.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Name recorded in run metadata for the generator in use.
pub const GENERATOR_NAME: &str = "chacha8";

/// Seeded generator used throughout the engine.
#[derive(Debug, Clone)]
pub struct PortableRng(ChaCha8Rng);

impl PortableRng {
    pub fn from_seed(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Generator for a named sub-stream of `seed`, e.g. one per (question, size).
    pub fn for_stream(seed: u64, labels: &[&str]) -> Self {
        Self::from_seed(derive_seed(seed, labels))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `0..bound` by rejection sampling. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        // Largest multiple of `bound` representable; draws above it are rejected.
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct elements without replacement, in draw order.
    ///
    /// Partial Fisher-Yates: the first `count` positions of a shuffled copy.
    pub fn sample<T: Clone>(&mut self, items: &[T], count: usize) -> Vec<T> {
        assert!(count <= items.len(), "sample larger than population");
        let mut pool = items.to_vec();
        for i in 0..count {
            let j = i + self.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

/// Mixes a base seed with string labels into a 64-bit stream seed.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
