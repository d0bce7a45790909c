//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator keyed
//! by a 64-bit seed and a 64-bit stream id. Parallel Monte Carlo splits work
//! into fixed-size chunks, each with its own derived stream, so results do not
//! depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream ids, so that one user seed feeds independent substreams.
pub mod streams {
    pub const NET_CANDIDATES: u64 = 0x6e65_7401;
    pub const NET_REPAIR: u64 = 0x6e65_7402;
    pub const COVERING_PROBES: u64 = 0x6e65_7403;
    pub const REGION_MOMENTS: u64 = 0x6d6f_6d01;
    pub const REGION_MOMENTS_FIT: u64 = 0x6d6f_6d02;
    pub const KERNEL_PAIRS: u64 = 0x6b65_7201;
    pub const SEESAW_RESTARTS: u64 = 0x7365_6501;
    pub const BELL_PAIRS: u64 = 0x6265_6c01;
    pub const TSIRELSON_PAIRS: u64 = 0x7473_6901;
    pub const PARTIAL_NORM: u64 = 0x706e_6f01;
    pub const DOT_SQUARED: u64 = 0x646f_7401;
    pub const APPENDIX_POINTS: u64 = 0x6170_7001;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id of child `index` under `parent`.
pub fn child_stream(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(0x5bd1_e995)))
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
