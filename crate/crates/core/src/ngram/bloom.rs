use std::sync::atomic::{AtomicU64, Ordering};

use xxhash_rust::xxh3::xxh3_128;

/// Bits for `items` entries at false-positive rate `fpr`:
/// `m = ceil(-n ln p / (ln 2)^2)`.
pub fn optimal_bit_len(items: u64, fpr: f64) -> u64 {
    let n = items.max(1) as f64;
    let m = (-n * fpr.ln() / (std::f64::consts::LN_2 * std::f64::consts::LN_2)).ceil();
    (m as u64).max(64)
}

/// `k = round(m / n * ln 2)`, at least one.
pub fn optimal_hash_count(bit_len: u64, items: u64) -> u32 {
    let k = (bit_len as f64 / items.max(1) as f64 * std::f64::consts::LN_2).round();
    (k as u32).max(1)
}

/// Expected false-positive rate after `items` insertions.
pub fn expected_fpr(bit_len: u64, hash_count: u32, items: u64) -> f64 {
    let k = hash_count as f64;
    (1.0 - (-k * items as f64 / bit_len as f64).exp()).powf(k)
}

/// Two 64-bit halves of the 128-bit hash of an n-gram key.
pub fn key_hashes(key: &[u8]) -> (u64, u64) {
    let h = xxh3_128(key);
    (h as u64, (h >> 64) as u64)
}

#[inline]
fn probe(h1: u64, h2: u64, i: u32, bit_len: u64) -> u64 {
    h1.wrapping_add((i as u64).wrapping_mul(h2)) % bit_len
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomShard {
    pub(crate) words: Vec<u64>,
    pub(crate) bit_len: u64,
    pub(crate) hash_count: u32,
    pub(crate) inserted: u64,
}

impl BloomShard {
    pub fn with_params(bit_len: u64, hash_count: u32) -> Self {
        BloomShard {
            words: vec![0; bit_len.div_ceil(64) as usize],
            bit_len,
            hash_count,
            inserted: 0,
        }
    }

    pub fn sized_for(items: u64, fpr: f64) -> Self {
        let bit_len = optimal_bit_len(items, fpr);
        BloomShard::with_params(bit_len, optimal_hash_count(bit_len, items))
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn hash_count(&self) -> u32 {
        self.hash_count
    }

    /// Insertions performed (duplicates included).
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn insert_hashes(&mut self, h1: u64, h2: u64) {
        for i in 0..self.hash_count {
            let bit = probe(h1, h2, i, self.bit_len);
            self.words[(bit / 64) as usize] |= 1 << (bit % 64);
        }
        self.inserted += 1;
    }

    pub fn insert(&mut self, key: &[u8]) {
        let (h1, h2) = key_hashes(key);
        self.insert_hashes(h1, h2);
    }

    pub fn contains_hashes(&self, h1: u64, h2: u64) -> bool {
        (0..self.hash_count).all(|i| {
            let bit = probe(h1, h2, i, self.bit_len);
            self.words[(bit / 64) as usize] & (1 << (bit % 64)) != 0
        })
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        let (h1, h2) = key_hashes(key);
        self.contains_hashes(h1, h2)
    }

    pub fn fill_ratio(&self) -> f64 {
        let ones: u64 = self.words.iter().map(|w| w.count_ones() as u64).sum();
        ones as f64 / self.bit_len as f64
    }
}

/// Shared-insert form used while building; bit-OR is order independent so
/// the frozen shard does not depend on thread scheduling.
pub(crate) struct AtomicShard {
    words: Vec<AtomicU64>,
    bit_len: u64,
    hash_count: u32,
    inserted: AtomicU64,
}

impl AtomicShard {
    pub fn new(bit_len: u64, hash_count: u32) -> Self {
        AtomicShard {
            words: (0..bit_len.div_ceil(64)).map(|_| AtomicU64::new(0)).collect(),
            bit_len,
            hash_count,
            inserted: AtomicU64::new(0),
        }
    }

    pub fn insert(&self, key: &[u8]) {
        let (h1, h2) = key_hashes(key);
        for i in 0..self.hash_count {
            let bit = probe(h1, h2, i, self.bit_len);
            self.words[(bit / 64) as usize].fetch_or(1 << (bit % 64), Ordering::Relaxed);
        }
        self.inserted.fetch_add(1, Ordering::Relaxed);
    }

    pub fn freeze(self) -> BloomShard {
        BloomShard {
            words: self.words.into_iter().map(AtomicU64::into_inner).collect(),
            bit_len: self.bit_len,
            hash_count: self.hash_count,
            inserted: self.inserted.into_inner(),
        }
    }
}
