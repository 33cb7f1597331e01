//! Counter-based seed splitting.
//!
//! Every random stream is identified by `(base_seed, stream, index)` and gets
//! its own ChaCha8 generator seeded from
//! `splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)`. Replica `i`
//! therefore draws the same numbers regardless of how replicas are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Stream tags. Distinct roles inside one experiment never share a stream.
pub mod stream {
    pub const PRIMARY: u64 = 0x01;
    pub const SECONDARY: u64 = 0x02;
    pub const SIDE_A: u64 = 0x10;
    pub const SIDE_B: u64 = 0x11;
    pub const SIDE_B_PRIME: u64 = 0x12;
    pub const POOL: u64 = 0x20;
    pub const RESAMPLE: u64 = 0x21;
    pub const FORMULA: u64 = 0x30;
    pub const DIAGNOSTIC: u64 = 0x40;
    pub const DECORATION: u64 = 0x50;
    pub const BBM_RETRY: u64 = 0x60;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn rng_for(base: u64, stream: u64, index: u64) -> ReplicaRng {
    ReplicaRng::seed_from_u64(derive_seed(base, stream, index))
}

pub fn rng_from_seed(seed: u64) -> ReplicaRng {
    ReplicaRng::seed_from_u64(seed)
}

/// Uniform on `(0, 1]`.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard exponential by inversion.
#[inline]
pub fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open_unit(rng).ln()
}
