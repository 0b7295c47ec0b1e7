//! Seeded, splittable random streams.
//!
//! A [`RngStream`] is a `(seed, stream_id)` pair. Generators are ChaCha8 keyed
//! by the seed with the ChaCha stream word set to `stream_id`, so the output is
//! identical on every platform. Child streams are obtained by hashing a label
//! into the stream id; work that runs in parallel derives its own child stream
//! instead of sharing a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Labels for the different consumers of randomness.
///
/// Mixed into the stream id together with the trial index so that, for
/// example, instance generation and bootstrap sampling of the same trial never
/// share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Instance = 0x1,
    Bootstrap = 0x2,
    Sampler = 0x3,
    NullSpace = 0x4,
    Support = 0x5,
    Values = 0x6,
    Noise = 0x7,
    Matrix = 0x8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream for a master seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream identified by `label`.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: mix(self.stream_id, label),
        }
    }

    pub fn derive_role(&self, role: Role) -> Self {
        self.derive(role as u64)
    }

    /// `derive` applied successively for every label in `path`.
    pub fn derive_path(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &l| s.derive(l))
    }

    /// Stream for the `trial`-th work item of the given role.
    pub fn for_trial(&self, trial: u64, role: Role) -> Self {
        self.derive(trial).derive_role(role)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019)))
}
