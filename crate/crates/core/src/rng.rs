//! Counter-based random streams.
//!
//! Every random decision in a run draws from a stream addressed by
//! `(seed, purpose, index)`, so results do not depend on the order in which
//! workers execute, and a run resumed at iteration `t` sees the same draws as
//! an uninterrupted one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags that partition the stream space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Generate = 1,
    Split = 2,
    Init = 3,
    Iteration = 4,
    Node = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose as u64)));
    rng.set_stream(splitmix64(index));
    rng
}

/// Stream for the local update of `node` during iteration `iter`.
pub fn node_stream(seed: u64, iter: u64, node: usize) -> StreamRng {
    stream(seed, Purpose::Node, (iter << 32) ^ node as u64)
}
