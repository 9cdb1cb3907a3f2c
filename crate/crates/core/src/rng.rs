//! Seeded random streams.

use rand::SeedableRng;

pub type LabRng = rand_chacha::ChaCha8Rng;

/// Root stream for a seed.
pub fn seeded(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// Independent child stream keyed by `(seed, purpose)`.
///
/// Each subsystem (environment, sampling, evaluation) owns its own stream so
/// that changing how many draws one consumes never shifts another.
pub fn derive(seed: u64, purpose: u64) -> LabRng {
    let mut rng = LabRng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose)));
    rng.set_stream(purpose);
    rng
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn tags into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub mod purpose {
    pub const ENV: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const INIT: u64 = 4;
    pub const RESONANCE: u64 = 5;
}
