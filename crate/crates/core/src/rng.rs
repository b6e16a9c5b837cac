//! Deterministic random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from the run seed,
//! a module name and an index, so adding draws in one place never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type LabRng = ChaCha8Rng;

/// Stream for `(seed, module, index)`.
pub fn stream(seed: u64, module: &str, index: u64) -> LabRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((module.len() as u64).to_le_bytes());
    hasher.update(module.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
