//! Counter-based hashing and stream derivation.
//!
//! All randomness in the crate is a pure function of (seed, counter) pairs:
//! field variates come from a SplitMix64 chain over the cell index, path
//! simulations from ChaCha streams keyed by path id, and Bernoulli marks from
//! the mark seed and the lattice time index. Re-evaluating anything with the
//! same inputs is bitwise stable across runs and across thread schedules.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a bijective 64-bit mix with good avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Chains a word into a running hash state.
#[inline]
pub fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word)
}

/// Signed-to-unsigned zigzag so that nearby lattice indices of either sign
/// hash independently.
#[inline]
pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Uniform variate in [-1, 1], derived from the top 53 bits of the hash.
#[inline]
pub fn unit_symmetric(h: u64) -> f64 {
    // top 53 bits -> [0,1), then affine to [-1,1)
    let u = (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
    2.0 * u - 1.0
}

/// Uniform variate in [0, 1).
#[inline]
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Derives an independent sub-seed from a master seed and a stream tag.
#[inline]
pub fn substream(seed: u64, tag: u64, index: u64) -> u64 {
    absorb(absorb(mix64(seed), tag), index)
}

/// A counter-derived ChaCha stream: one per simulated path, keyed by the
/// master seed and the path index so results are independent of scheduling.
pub fn path_stream(seed: u64, path_id: u64) -> ChaCha8Rng {
    let key = substream(seed, STREAM_PATH, path_id);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(key.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stream tags keep the hash domains of unrelated consumers disjoint.
pub const STREAM_PATH: u64 = 0x70617468; // "path"
pub const STREAM_MARKS: u64 = 0x6d61726b; // "mark"
pub const STREAM_FIELD: u64 = 0x66696c64; // "fild"
pub const STREAM_SAMPLER: u64 = 0x73616d70; // "samp"
