//! Named random substreams.
//!
//! Every random decision in a run (fold assignment, parameter init, batch
//! shuffling, dropout masks) draws from a ChaCha stream whose seed is derived
//! from the single run seed and a label, so adding a consumer never perturbs
//! the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known substream labels.
pub mod stream {
    pub const FOLDS: &str = "folds";
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const DROPOUT: &str = "dropout";
    pub const VALIDATION: &str = "validation";
    pub const FOREST: &str = "forest";
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a label.
pub fn derive(seed: u64, label: &str) -> u64 {
    splitmix(fnv1a(fnv1a(FNV_OFFSET, &seed.to_le_bytes()), label.as_bytes()))
}

/// Derive a child seed from `seed`, a label and an index (fold, epoch, ...).
pub fn derive_indexed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix(derive(seed, label) ^ splitmix(index))
}

pub fn rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label))
}

pub fn rng_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(seed, label, index))
}

/// Stable 64-bit hash of a string, used by the hashing tokenizer.
pub fn hash_str(salt: u64, s: &str) -> u64 {
    splitmix(fnv1a(fnv1a(FNV_OFFSET, &salt.to_le_bytes()), s.as_bytes()))
}
