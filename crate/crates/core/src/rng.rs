//! Seed derivation for reproducible, independent random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream whose seed is
//! derived from a master seed by [`derive_seed`]. Derivation is a pure
//! function of `(parent, tag, index)` so parallel and sequential execution
//! draw exactly the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Labels for the independent streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Replication = 1,
    Episode = 2,
    Demand = 3,
    WarmupArrivals = 4,
    Arrivals = 5,
    Failures = 6,
    AgentInit = 7,
    AgentAct = 8,
    AgentTrain = 9,
    PlanSearch = 10,
    Pretrain = 11,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` number `index` under `parent`.
///
/// `splitmix64(splitmix64(splitmix64(parent) ^ tag) ^ index)`.
pub fn derive_seed(parent: u64, tag: StreamTag, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ tag as u64) ^ index)
}

/// Opens the stream `tag`/`index` under `parent`.
pub fn stream(parent: u64, tag: StreamTag, index: u64) -> Stream {
    Stream::seed_from_u64(derive_seed(parent, tag, index))
}
