//! Seed derivation.
//!
//! Every random draw in the crate flows from one master seed. Sub-seeds are
//! derived by hashing `(master, label, index)` so that a replicate's stream
//! depends only on its identity, never on which worker ran it or when.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stable sub-seed for the stream named `label`, replicate `index`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_rng(master: u64, label: &str, index: u64) -> Rng {
    rng(derive_seed(master, label, index))
}
