//! Deterministic seed derivation for parallel Monte-Carlo streams.
//!
//! Every frame gets its own RNG seeded from `(master_seed, stream index)`
//! through a splitmix-style mix, so serial and worker-pool runs draw
//! identical randomness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(master ^ mix(stream))
}

/// RNG for one derived stream.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
