//! Seeded random streams.
//!
//! Every run owns one `u64` seed. Independent consumers (environment dynamics,
//! policy noise, sketch sampling, ...) draw from separate ChaCha streams of
//! the same key, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Policy = 2,
    Sketch = 3,
    GroundTruth = 4,
    FeatureMap = 5,
    Diagnostics = 6,
    Synthetic = 7,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Derives a child seed, e.g. one per ground-truth test state or per sketch
/// in a Monte Carlo batch.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
