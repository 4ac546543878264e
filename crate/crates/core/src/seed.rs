//! Seed derivation.
//!
//! Every random component takes an explicit `u64` seed. Sub-seeds for
//! stages, folds, resamples and so on are derived by hashing the parent
//! seed with a tag, so adding a consumer never shifts another one's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First eight bytes (little endian) of `sha256(le_bytes(parent) || tag)`.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// [`derive_seed`] with a numeric tag such as a fold or resample index.
pub fn derive_indexed(parent: u64, tag: &str, index: u64) -> u64 {
    derive_seed(parent, &format!("{tag}/{index}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
