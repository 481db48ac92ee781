//! Seeded random streams.
//!
//! Every independent consumer of randomness gets its own ChaCha stream
//! derived from `(seed, domain, index)`, so adding users or queries never
//! perturbs the draws of earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a stream.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Domain {
    Listings = 1,
    User = 2,
    PretrainUser = 3,
    Assignment = 4,
    MonteCarlo = 5,
    Query = 6,
    Draft = 7,
    Gbdt = 8,
}

/// SplitMix64 finalizer, used to spread `(seed, domain)` into a key.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain as u64)));
    rng.set_stream(index);
    rng
}
