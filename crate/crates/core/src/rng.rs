//! Per-item deterministic random streams.
//!
//! Every randomized step draws from a stream derived purely from
//! `(global_seed, item_index)`, so results do not depend on the order in
//! which items are processed or on the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for one item.
pub fn item_seed(global_seed: u64, item_index: u64) -> u64 {
    mix64(mix64(global_seed.wrapping_add(GOLDEN_GAMMA)) ^ item_index.wrapping_mul(GOLDEN_GAMMA))
}

/// Random stream owned by a single item.
#[derive(Clone, Debug)]
pub struct SeededRng {
    global_seed: u64,
    item_index: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn global_seed(&self) -> u64 {
        self.global_seed
    }

    pub fn item_index(&self) -> u64 {
        self.item_index
    }
}

/// Stateless derivation: identical inputs give a bit-identical stream.
pub fn derive_item_rng(global_seed: u64, item_index: u64) -> SeededRng {
    SeededRng {
        global_seed,
        item_index,
        inner: ChaCha8Rng::seed_from_u64(item_seed(global_seed, item_index)),
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
