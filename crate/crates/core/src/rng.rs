//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(seed, stream, index)`, so turning one phase of training on or off never
//! shifts the draws seen by another, and epoch `k` can be replayed without
//! replaying epochs `0..k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_BATCHES: u64 = 2;
pub const STREAM_PARTICLE_INIT: u64 = 3;
pub const STREAM_PARTICLE_BATCHES: u64 = 4;
pub const STREAM_CANDIDATES: u64 = 5;
pub const STREAM_POOL: u64 = 6;
pub const STREAM_SPLIT: u64 = 7;
pub const STREAM_SWEEP: u64 = 8;

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Seed for the `index`-th derived run of a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(base, STREAM_SWEEP, index).next_u64()
}
