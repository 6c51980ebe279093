//! Counter-based random streams.
//!
//! Every stochastic draw in the crate comes from a ChaCha stream addressed by
//! `(seed, purpose, a, b)`, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    InitialDesign = 1,
    GpFit = 2,
    Acquisition = 3,
    Replicate = 4,
    Prbs = 5,
    Assessment = 6,
    Simulate = 7,
}

/// Stream identifier packed as `purpose:8 | a:32 | b:24`.
pub fn stream_id(purpose: Purpose, a: u64, b: u64) -> u64 {
    ((purpose as u64) << 56) | ((a & 0xffff_ffff) << 24) | (b & 0xff_ffff)
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives a child seed, used where an API takes a plain `u64` seed.
pub fn derive_seed(seed: u64, id: u64) -> u64 {
    use rand::RngCore;
    stream(seed, id).next_u64()
}
