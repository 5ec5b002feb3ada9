//! Seeded random streams.
//!
//! Every random draw comes from ChaCha8 keyed by the run seed. Independent
//! consumers use distinct ChaCha stream ids, so adding dropout draws never
//! shifts the weight initialization and vice versa.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Split = 3,
    Graph = 4,
    Folds = 5,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
