//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha20 generator keyed by a
//! 64-bit seed, with a separate stream id per random object so that
//! changing one draw never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub mod streams {
    pub const SUPPORT: u64 = 1;
    pub const OUTLIERS: u64 = 2;
    pub const COEFFICIENTS: u64 = 3;
    pub const DESIGN: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const ZEROS: u64 = 6;
    pub const SHARED_FACTOR: u64 = 7;
    pub const LTS: u64 = 101;
    pub const S_ESTIMATE: u64 = 102;
    pub const GS: u64 = 103;
}
