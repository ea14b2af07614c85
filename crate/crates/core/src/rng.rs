//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a stream identified by
//! `(seed, stage, index...)`. Streams are independent of scheduling, so
//! parallel rollouts produce the same numbers as sequential ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stage tags separating the seed namespaces of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stage {
    Init = 1,
    Pretrain = 2,
    Train = 3,
    Evaluate = 4,
    InitialBackoff = 5,
    Design = 6,
    Acquire = 7,
    Dataset = 8,
    GpFit = 9,
    FinalEvaluate = 10,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into a single 64-bit key.
pub fn derive_key(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, stage: Stage, parts: &[u64]) -> Stream {
    let mut path = Vec::with_capacity(parts.len() + 1);
    path.push(stage as u64);
    path.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(derive_key(seed, &path))
}
