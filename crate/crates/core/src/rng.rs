//! Named ChaCha8 substreams derived from a single master seed.
//!
//! The 32-byte ChaCha key is `master seed || FNV-1a(stream name) || shard`,
//! so every `(seed, name, shard)` triple gets its own keystream and drawing
//! from one stream never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DYNAMICS: &str = "dynamics";
pub const OBS_CHOICE: &str = "obs_choice";
pub const OBS_AUGMENT: &str = "obs_augment";
pub const REWARD_NOISE: &str = "reward_noise";
pub const TASK_GEN: &str = "task_gen";
pub const POLICY: &str = "policy";

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, byte| {
        (h ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic substream for `(master, name, shard)`.
pub fn substream(master: u64, name: &str, shard: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(name).to_le_bytes());
    key[16..24].copy_from_slice(&shard.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The environment-owned streams.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub dynamics: ChaCha8Rng,
    pub obs_choice: ChaCha8Rng,
    pub obs_augment: ChaCha8Rng,
    pub reward_noise: ChaCha8Rng,
    pub task_gen: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self::for_shard(master, 0)
    }

    /// Streams for one worker of a sharded Monte Carlo run.
    pub fn for_shard(master: u64, shard: u64) -> Self {
        Self {
            dynamics: substream(master, DYNAMICS, shard),
            obs_choice: substream(master, OBS_CHOICE, shard),
            obs_augment: substream(master, OBS_AUGMENT, shard),
            reward_noise: substream(master, REWARD_NOISE, shard),
            task_gen: substream(master, TASK_GEN, shard),
        }
    }
}
