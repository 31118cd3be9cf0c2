//! Seeded random streams. Every stochastic routine takes a seed and derives
//! independent streams from it so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers for the different consumers of one seed.
pub mod streams {
    pub const PRIOR_DRAWS: u64 = 1;
    pub const POSTERIOR_DRAWS: u64 = 2;
    pub const SIMULATION: u64 = 3;
    pub const CHECK: u64 = 4;
    /// Chain `c` of an MCMC run uses `MCMC_CHAIN + c`.
    pub const MCMC_CHAIN: u64 = 1 << 32;
    /// Draw `d` of the hierarchical ancestral sampler uses `ANCESTRAL_DRAW + d`.
    pub const ANCESTRAL_DRAW: u64 = 2 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
