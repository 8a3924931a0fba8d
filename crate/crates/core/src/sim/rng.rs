//! Seeded, independent random streams per stochastic concern.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Concern {
    Ctr = 1,
    Participation = 2,
    Win = 3,
    Click = 4,
    Traffic = 5,
}

/// Every stream is derived from the one seed, the concern and an index
/// (slot or day), so changing how one mechanism consumes randomness never
/// shifts another's draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, concern: Concern, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((concern as u64) << 32) | (index & 0xffff_ffff));
        rng
    }
}
