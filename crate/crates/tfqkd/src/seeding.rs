//! Labelled substream derivation from a single master seed.
//!
//! Every random consumer (simulation shards, drift traces, random test
//! points) receives its own ChaCha stream derived by hashing
//! `(master seed, label, index)`. Streams with different labels or indices
//! are statistically independent, and the whole program is reproducible
//! from the one master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derives the 32-byte seed for the substream `(label, index)`.
pub fn derive_seed(master_seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update([label.len() as u8]);
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

/// Deterministic RNG for the substream `(label, index)`.
pub fn derive_rng(master_seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_seed(master_seed, label, index))
}
