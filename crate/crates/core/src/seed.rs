//! Stable seed derivation and RNG construction.
//!
//! Derived seeds depend only on their inputs, never on thread scheduling or
//! iteration order, so parallel work reproduces serial results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed for item `index` of source `source_id` under `master`.
pub fn derive_seed(master: u64, source_id: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(source_id.as_bytes()));
    splitmix64(h ^ index)
}

/// Seed for a labelled sub-stream (e.g. "shuffle", "init").
pub fn sub_seed(master: u64, stream: &str) -> u64 {
    derive_seed(master, stream, 0)
}
