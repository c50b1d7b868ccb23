//! Counter-based seeding.
//!
//! Every random stream in the crate is addressed by a tuple of integers
//! (master seed, purpose tag, realization index, path index, ...). The tuple
//! is hashed with a SplitMix64 chain into a ChaCha8 key, so the stream for a
//! given address never depends on which worker draws it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags that keep streams for different roles disjoint.
pub mod tag {
    pub const FIELD: u64 = 0x6669_656c_64;
    pub const PATH: u64 = 0x7061_7468;
    pub const CELL: u64 = 0x6365_6c6c;
    pub const SAMPLE: u64 = 0x7361_6d70;
    pub const PILOT: u64 = 0x7069_6c6f_74;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash an address tuple into a 64-bit seed.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &w in words {
        h = splitmix64(h ^ splitmix64(w));
    }
    h
}

/// Independent generator for the given address.
pub fn stream(words: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = mix(words);
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
