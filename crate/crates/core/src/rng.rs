//! Seeded, portable random streams.
//!
//! Every random decision in the crate is drawn from a ChaCha8 stream whose
//! seed is derived from a root seed plus a short path of integers, e.g.
//! `(root, [BATCH, batch_index])`. Two different paths never share a stream,
//! so parallel trials and per-cluster generators stay reproducible no matter
//! how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Stream = ChaCha8Rng;

/// Domain tags keep unrelated consumers of the same root seed apart.
pub mod tag {
    pub const REM: u64 = 0x5245_4d00;
    pub const BMM: u64 = 0x424d_4d00;
    pub const BATCH: u64 = 0x4241_5443;
    pub const DRAW: u64 = 0x4452_4157;
    pub const RESERVOIR: u64 = 0x5253_5652;
    pub const SECOND_STAGE: u64 = 0x5345_4344;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const STEP: u64 = 0x5354_4550;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p.wrapping_add(0x6a09_e667_f3bc_c909))))
}

/// Open the stream identified by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
