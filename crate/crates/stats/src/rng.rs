//! Seeded, portable random streams.
//!
//! Every stochastic model draws from its own ChaCha8 stream keyed by
//! (run seed, model tag, element index), so per-element draws are
//! independent of iteration order and a run is reproducible from its
//! seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which model a stream belongs to. The discriminant is part of the
/// stream key, so adding variants at the end keeps old streams stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    FuelClass = 1,
    ActiveCapacity = 2,
    Cost = 3,
    ThermalFit = 4,
    Scenario = 5,
}

/// Derive the ChaCha key for (seed, tag, element) with splitmix64 steps.
fn key(seed: u64, tag: StreamTag, element: u64) -> [u8; 32] {
    let mut state = seed;
    let mut out = [0u8; 32];
    let inputs = [seed, tag as u64, element, 0x9e3779b97f4a7c15];
    for (chunk, add) in out.chunks_exact_mut(8).zip(inputs) {
        state = state.wrapping_add(add).wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    out
}

/// The random stream for one (model, element) pair under a run seed.
pub fn stream(seed: u64, tag: StreamTag, element: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key(seed, tag, element))
}
