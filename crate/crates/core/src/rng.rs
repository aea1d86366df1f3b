//! Seeded random streams.
//!
//! Every random consumer gets its own ChaCha8 stream derived from the master
//! seed, a purpose tag and an index, so realizations are independent of the
//! order in which they run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Wealth = 1,
    Allocation = 2,
    Dynamics = 3,
    Adjust = 4,
    BurnIn = 5,
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}

/// Deterministic child seed for `(seed, purpose, index)` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut z = seed
        ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
