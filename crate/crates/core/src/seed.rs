//! Per-item random streams.
//!
//! Every random decision is drawn from a stream keyed by
//! `(master_seed, item id, purpose)`, so results never depend on the order
//! in which workers process items.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent, reproducible RNG for one item and purpose.
pub fn derive_rng(master_seed: u64, item: &str, purpose: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((item.len() as u64).to_le_bytes());
    hasher.update(item.as_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
