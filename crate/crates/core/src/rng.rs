//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user seed, with the 64-bit stream id split into a replicate (or chain)
//! number and a purpose tag. Two draws that differ in either component never
//! share a keystream, so results do not depend on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant occupies the low byte of the
/// stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Design = 1,
    Survival = 2,
    Censoring = 3,
    Coefficients = 4,
    NullSimulation = 5,
    Search = 6,
    Folds = 7,
    StartModel = 8,
}

/// Generator for `(seed, index, purpose)`; `index` is the replicate, chain or
/// fold number.
pub fn stream(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}
