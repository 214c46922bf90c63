//! Seeded random streams. Every source of randomness in a run derives from
//! the single configured seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SrlRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SrlRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator for `seed`.
pub fn stream(seed: u64, stream: u64) -> SrlRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exact position of a ChaCha stream, restorable with [`RngState::restore`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &SrlRng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Option<SrlRng> {
        if self.seed.len() != 64 {
            return None;
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).ok()?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().ok()?);
        Some(rng)
    }
}

/// The trainer's three streams: environment resets, policy sampling and
/// replay sampling.
#[derive(Clone, Debug)]
pub struct RngStreams {
    pub env: SrlRng,
    pub policy: SrlRng,
    pub sampler: SrlRng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: stream(seed, 1),
            policy: stream(seed, 2),
            sampler: stream(seed, 3),
        }
    }
}
