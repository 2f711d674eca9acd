//! Counter-based random sub-streams.
//!
//! Every trajectory gets its own ChaCha stream addressed by
//! `(master seed, deployment, trajectory)`, so sampling can run in any order
//! (or in parallel) and still reproduce bit-identical data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derives an independent child stream, e.g. one per experiment phase.
    pub fn child(&self, tag: u64) -> SeedStream {
        SeedStream::new(splitmix64(self.master ^ splitmix64(tag.wrapping_add(0xA5A5))))
    }

    /// Generator for trajectory `trajectory` of deployment `deployment`.
    pub fn trajectory_rng(&self, deployment: u64, trajectory: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master ^ splitmix64(deployment)));
        rng.set_stream(trajectory);
        rng
    }

    /// Generator for auxiliary (non-trajectory) randomness.
    pub fn aux_rng(&self, tag: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.master.rotate_left(17) ^ splitmix64(!tag)))
    }
}
