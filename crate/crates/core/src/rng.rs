//! Counter-based random streams.
//!
//! Every random draw in a run is addressed by `(seed, purpose, a, b)`,
//! typically `(seed, purpose, node, round)`. The address is used as the
//! key of a ChaCha8 generator, so a stream's contents never depend on how
//! many draws other streams made or on thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the stream key so that, e.g., the
/// dither and the mini-batch sampler of the same node and round never
/// share bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Dither = 1,
    Batch = 2,
    Data = 3,
    Partition = 4,
    Init = 5,
    Test = 6,
}

/// Open the stream at address `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, purpose as u64, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Source of uniform `[0, 1)` dither values, one per vector entry.
pub trait Dither {
    fn next_uniform(&mut self) -> f64;
}

impl<R: RngCore> Dither for R {
    fn next_uniform(&mut self) -> f64 {
        self.random::<f64>()
    }
}

/// A dither that always returns the same value. Used to make quantizer
/// outputs hand-checkable.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDither(pub f64);

impl Dither for ConstantDither {
    fn next_uniform(&mut self) -> f64 {
        self.0
    }
}
