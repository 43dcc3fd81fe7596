//! Seeded random streams.
//!
//! Every consumer of randomness draws from a ChaCha8 stream keyed by the
//! user seed and a fixed stream identifier, so sub-streams stay independent
//! and reproducible regardless of call order or thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Bootstrap replicates use `BOOTSTRAP_BASE + replicate`
/// offset by the round number.
pub mod stream {
    pub const SYNTH_FEATURES: u64 = 1;
    pub const SYNTH_NOISE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const RESIDUALS: u64 = 4;
    pub const BOOTSTRAP_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed for round `round` of the alternating loop, so each round's
/// bootstrap draws differ while staying a pure function of the base seed.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(round as u64)
        .rotate_left(17)
}
