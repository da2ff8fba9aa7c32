//! Seeded random streams. Every stochastic routine takes an explicit
//! generator so that runs are reproducible from a single integer seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GraphRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> GraphRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer) so that
/// independent components get decorrelated streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, stream: u64) -> GraphRng {
    seeded(derive_seed(seed, stream))
}
