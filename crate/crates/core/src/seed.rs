//! Seed derivation.
//!
//! A global seed fans out into independent streams with a counter scheme:
//! `derive(seed, id) = splitmix64(seed ^ splitmix64(id))`. Every consumer owns
//! a fixed `id`, so adding a new consumer never changes the streams of
//! existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage identifiers used with [`derive`]. Values are fixed forever.
pub mod stage {
    pub const INGEST: u64 = 1;
    pub const VOLATILITY: u64 = 2;
    pub const CLUSTER: u64 = 3;
    pub const CAUSAL: u64 = 4;
    pub const LAGS: u64 = 5;
    pub const BACKTEST: u64 = 6;
    pub const SYNTH: u64 = 7;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(id))
}

/// Deterministic generator for replicate `index` of a computation seeded by `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
