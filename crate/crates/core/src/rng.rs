//! Seed plumbing: one base seed per sweep, one derived seed per run, and
//! independent named sub-streams within a run so adding a randomness consumer
//! never perturbs the draws seen by existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on u64, so distinct inputs give distinct
/// outputs; used as the stateless mixing step for seed derivation.
pub const fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed for run `index` under sweep seed `base`.
///
/// `base ^ (index+1)*golden` walks a full-period odd-multiplier sequence, and
/// the SplitMix64 finalizer is a bijection, so seeds are pairwise distinct
/// for any two indices under 2^64.
pub const fn mix_run_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Randomness consumers within one run. Each gets its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    /// Client<->headnode link sampling (jitter, loss), both directions.
    AccessLink = 1,
    /// Headnode<->worker link sampling, both directions.
    IntraLink = 2,
    /// Metric-report transport over the intra link.
    Metrics = 3,
    /// Per-request service-time wobble inside a replica.
    Service = 4,
}

/// Independent generator for one consumer of one run.
pub fn stream_rng(run_seed: u64, id: StreamId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(run_seed ^ splitmix64(0xED6E_5000 + id as u64)))
}

/// Uniform draw in [0, 1).
pub fn uniform01<R: Rng>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}
