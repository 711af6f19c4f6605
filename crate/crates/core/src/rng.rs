//! Seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`]. Streams for
//! independent units of work are derived from a master seed by a fixed
//! counter scheme:
//!
//! ```text
//! seed(master, task, index) = mix(mix(mix(master) ^ task) ^ index)
//! rng = ChaCha8Rng::seed_from_u64(seed)
//! ```
//!
//! where `mix` is the SplitMix64 finaliser. A unit is identified by a task
//! tag (one constant per kind of work, see [`tasks`]) and an index, so adding
//! a new task or more indices never shifts the stream of an existing unit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, task: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ task) ^ index)
}

/// Generator for unit `index` of `task` under `master`.
pub fn stream(master: u64, task: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, task, index))
}

/// Task tags for [`stream`]. The values are part of the reproducibility
/// contract and must never be renumbered.
pub mod tasks {
    pub const ESTIMATE: u64 = 1;
    pub const GG_MAIN: u64 = 2;
    pub const GG_INDEPENDENT: u64 = 3;
    pub const SINGULARITY: u64 = 4;
    pub const EXCHANGEABILITY: u64 = 5;
    pub const COALESCENT: u64 = 6;
    pub const RPC_TIME_CHANGE: u64 = 7;
    pub const RPC_CASCADE: u64 = 8;
    pub const STABILITY: u64 = 9;
    pub const ROW: u64 = 10;
}
