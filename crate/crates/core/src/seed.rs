//! Deterministic per-trial random streams.
//!
//! Each trial gets independent generators for each role, derived from
//! `(base seed, trial index, role)`, so results never depend on which worker
//! ran a trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// Who consumes a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Tag identities, keys and initial pseudonyms.
    Setup = 1,
    /// Reader nonces.
    Reader = 2,
    /// Adversary choices (forged nonces, masks, guesses).
    Adversary = 3,
    /// Hidden environment coins such as the game's challenge bit.
    Environment = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(base: u64, trial: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ trial) ^ stream as u64)
}

pub fn trial_rng(base: u64, trial: u64, stream: Stream) -> TrialRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, trial, stream))
}
