//! Named, indexed random sub-streams derived from one top-level seed.
//!
//! Every randomized step asks for `stream(seed, name, index)` so its draws do
//! not depend on thread scheduling or on which other steps ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64;

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + name.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    xxh3_64(&buf)
}

pub fn stream(seed: u64, name: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, index))
}
