//! Deterministic random streams.
//!
//! One master seed feeds every stage of the pipeline. Each stage draws from its
//! own ChaCha8 stream keyed by `(seed, stage name, frame)`, so adding draws in
//! one stage never shifts the numbers seen by another. Per-voxel noise uses the
//! ChaCha stream id as a counter, which makes parallel and sequential noise
//! generation bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a 64-bit key from the master seed, a stage name and a frame index.
pub fn derive_key(seed: u64, stage: &str, frame: u64) -> u64 {
    let a = splitmix64(seed ^ fnv1a(stage.as_bytes()));
    splitmix64(a ^ splitmix64(frame.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// RNG for one stage at one frame.
pub fn stream(seed: u64, stage: &str, frame: u64) -> SimRng {
    SimRng::seed_from_u64(derive_key(seed, stage, frame))
}

/// RNG for element `index` of a counter-addressed family (e.g. one voxel).
pub fn counter_stream(base: &SimRng, index: u64) -> SimRng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng
}
