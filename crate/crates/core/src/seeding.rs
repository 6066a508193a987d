//! Seed derivation. Every random choice in the pipeline draws from a ChaCha
//! generator whose seed is derived from a base seed plus the identity of
//! the work item, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Default experiment seed.
pub const DEFAULT_SEED: u64 = 203;

/// Mixes `base` with a sequence of labels into a new 64-bit seed.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
