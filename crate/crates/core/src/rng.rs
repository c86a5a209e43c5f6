//! Per-trial random streams.
//!
//! Every Monte Carlo trial owns a ChaCha stream keyed by `(seed, trial)`, so a
//! trial's draws never depend on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `f` for every trial in `0..trials` on the current rayon pool and
/// returns the outputs in trial order.
pub fn map_trials<T, F>(seed: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, &mut trial_rng(seed, t)))
        .collect()
}
