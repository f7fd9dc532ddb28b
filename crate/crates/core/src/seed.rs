//! Seed derivation.
//!
//! A single master seed fixes every stochastic step. Each consumer gets its
//! own ChaCha8 stream: `derive(master, stream)` seeds ChaCha8 with `master`,
//! selects word stream `stream` and returns the first `u64`. Streams used by
//! the pipeline are listed in [`streams`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod streams {
    pub const GENERATOR: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const IMPUTE: u64 = 3;
    pub const FUSION: u64 = 4;
    pub const FOREST_24H: u64 = 5;
    pub const FOREST_72H: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const IMPORTANCE: u64 = 8;
    pub const TEMPORAL: u64 = 9;
}

pub fn derive(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// RNG for the `index`-th independent work item under `seed`.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
