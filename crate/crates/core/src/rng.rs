//! Seed derivation for independent, schedule-free random streams.
//!
//! Every consumer of randomness (an agent answering a query, an arbitration,
//! a Monte Carlo trial) gets its own ChaCha stream whose seed is a pure
//! function of the master seed and a set of labels. Execution order and
//! thread count therefore never change the sampled values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and an ordered list of labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    labels.iter().fold(mix64(master), |acc, label| {
        // Length prefix keeps ("ab","c") distinct from ("a","bc").
        let h = fnv1a(label.as_bytes()) ^ (label.len() as u64).rotate_left(32);
        mix64(acc ^ h)
    })
}

/// Stream for one agent answering one query.
pub fn agent_stream(master: u64, agent_id: &str, query_id: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &["agent", agent_id, query_id]))
}

/// Stream for the arbitration step of one query.
pub fn arbitration_stream(master: u64, query_id: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &["arbitration", query_id]))
}

/// Stream for the `index`-th Monte Carlo trial.
pub fn trial_stream(master: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(mix64(mix64(master) ^ mix64(index.wrapping_add(0x5eed))))
}
