//! Seed derivation.
//!
//! All randomness in the crate runs on ChaCha8, whose output is stable across
//! platforms and crate versions. Per-item streams are derived by seeding with
//! the master seed and selecting the ChaCha stream by item index, so an item's
//! randomness does not depend on which other items were processed before it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` under `master_seed`.
pub fn stream_rng(master_seed: u64, index: u64) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Per-item generation seed: first word of stream `index`, word position 0.
pub fn item_seed(master_seed: u64, index: u64) -> u64 {
    stream_rng(master_seed, index).next_u64()
}

/// Stream reserved for prompt sampling of item `index`. Uses the upper half of
/// the stream space so it never coincides with [`item_seed`]'s stream.
pub fn item_prompt_rng(master_seed: u64, index: u64) -> DetRng {
    stream_rng(master_seed, index | (1 << 63))
}
