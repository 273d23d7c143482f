//! Seed splitting.
//!
//! Every random component takes its own generator derived from one 64-bit
//! master seed:
//!
//! ```text
//! child(seed, stream, index) = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
//! ```
//!
//! `stream` is one of the constants below, and `index` is a round, chain or
//! trial number. A chain can therefore be replayed in isolation given only the
//! master seed and its coordinates. Generators are ChaCha8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub const INIT: u64 = 0x01;
pub const WEIGHTED_BANK: u64 = 0x02;
pub const UNIFORM_BANK: u64 = 0x03;
pub const BANK_COINS: u64 = 0x04;
pub const CHAIN: u64 = 0x05;
pub const ADAPTIVE_ROUND: u64 = 0x06;
pub const VOLUME_WALK: u64 = 0x07;
pub const WALK_PREFETCH: u64 = 0x08;
pub const TRIAL: u64 = 0x09;
pub const SYNTH: u64 = 0x0a;
pub const DIAG: u64 = 0x0b;
pub const PROPOSAL_CDF: u64 = 0x0c;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn child(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
}

pub fn rng(seed: u64, stream: u64, index: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(child(seed, stream, index))
}
