//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded through
//! `seed_from_u64`, which makes sketches bit-reproducible across platforms.
//! Child seeds are derived from a master seed with the SplitMix64 finalizer:
//!
//! ```text
//! derive(s, [t₁, …, t_k]) = mix(… mix(mix(s ⊕ mix(t₁)) ⊕ mix(t₂)) …)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream tags.
pub mod stream {
    pub const PILOT: u64 = 1;
    pub const SECOND_STAGE: u64 = 2;
    pub const TEST_SET: u64 = 3;
    pub const CV: u64 = 4;
    pub const REPEAT: u64 = 5;
    pub const DATA: u64 = 6;
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |s, &t| splitmix64(s ^ splitmix64(t)))
}

/// Stable 64-bit tag for a string (FNV-1a).
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
