//! Seeded substreams. Every (purpose, index) pair owns an independent ChaCha
//! stream derived from the run seed, so adding or removing an adversary never
//! shifts the signal sequence of an honest agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Signals = 0,
    Adversary = 1,
}

pub fn substream(seed: u64, purpose: Purpose, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}
