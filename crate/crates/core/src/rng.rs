//! Seed derivation. Every random quantity descends from one configuration seed
//! through named sub-streams; Monte Carlo paths additionally get their own
//! ChaCha stream keyed by the path index, so a path's increments do not depend
//! on which thread simulates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PATHS: &str = "mc/paths";
pub const STREAM_JITTER: &str = "quadrature/jitter";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the named sub-stream of `seed`.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Generator for item `index` of the stream seeded by `stream_seed`.
pub fn indexed_rng(stream_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    rng.set_stream(index);
    rng
}
