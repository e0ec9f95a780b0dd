//! Seeded random streams.
//!
//! Every stochastic step in the crate draws from a ChaCha stream derived from a
//! user seed plus a string tag, so results do not depend on iteration order or
//! on which other streams were consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent sub-stream keyed by `(seed, tag)`.
pub fn substream(seed: u64, tag: &str) -> Rng {
    Rng::seed_from_u64(splitmix(seed ^ splitmix(fnv1a(tag.as_bytes()))))
}
