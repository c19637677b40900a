//! Deterministic random streams.
//!
//! Every experiment is driven by a master seed. Independent consumers (a
//! session's measurements, its check-bit selection, the random key, trial
//! `k` of a batch, restart `k` of a search) each get their own ChaCha
//! stream, addressed by `(seed, stream index)`. Results therefore do not
//! depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream indices reserved inside a single session.
pub mod streams {
    pub const MEASUREMENT: u64 = 0;
    pub const DETECTION: u64 = 1;
    pub const KEY: u64 = 2;
}

/// The generator for stream `stream` of master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives the master seed of trial `index` in a batch run from `seed`.
///
/// Uses SplitMix64 finalization so neighbouring trials get unrelated seeds.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A uniformly random bit string of length `len`.
pub fn random_bits<R: rand::Rng>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}
