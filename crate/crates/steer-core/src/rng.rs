//! Seed derivation and random number generation.
//!
//! Every source of randomness in the crate flows from a single run seed
//! through named derivation: `rng_for(seed, "backbone-init")`,
//! `rng_for_indexed(seed, "ref-stream", i)`, and so on. Derivation is a hash
//! mix, so components draw from statistically independent streams and
//! per-item generation can run in parallel without coordination.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// FNV-1a over the label bytes, mixed with the root seed.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a component label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    mix(root ^ label_hash(label))
}

/// Derive a child seed for the `index`-th item of a labelled stream.
pub fn derive_seed_indexed(root: u64, label: &str, index: u64) -> u64 {
    mix(derive_seed(root, label).wrapping_add(mix(index)))
}

pub fn rng_for(root: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, label))
}

pub fn rng_for_indexed(root: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed_indexed(root, label, index))
}
