//! Seed derivation. Every random stage draws from its own ChaCha8 stream selected
//! by `(stage, channel, segment)`, so results never depend on processing order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stages of the simulation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stage {
    Source = 1,
    Loss = 2,
    Splitter = 3,
    Detector = 4,
    DarkCounts = 5,
    Resample = 6,
}

/// RNG for one stage/channel/segment triple.
pub fn stage_rng(seed: u64, stage: Stage, channel: u8, segment: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = (segment << 16) | ((stage as u64) << 8) | channel as u64;
    rng.set_stream(stream);
    rng
}

/// RNG for a stage keyed by an arbitrary index (e.g. source mode, Monte Carlo run).
pub fn indexed_rng(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    stage_rng(seed, stage, 0xff, index)
}
