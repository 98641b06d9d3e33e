//! Counter-based random streams.
//!
//! Every random draw in a run is taken from a stream addressed by
//! `(run seed, iteration, slot, purpose)`. Streams are independent of the
//! order in which workers pick up slots, which is what makes a run
//! bit-reproducible regardless of `worker_count`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Selection = 2,
    Mutation = 3,
    Evaluation = 4,
    Centroids = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a stream address into a single 64-bit seed.
pub fn derive_seed(run_seed: u64, iteration: u64, slot: u64, purpose: Purpose) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ iteration);
    h = splitmix64(h ^ slot);
    splitmix64(h ^ purpose as u64)
}

pub fn stream(run_seed: u64, iteration: u64, slot: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(run_seed, iteration, slot, purpose))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
