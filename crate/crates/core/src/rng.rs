//! Deterministic seeded random number generation.
//!
//! Every experiment in this crate derives its randomness from a single
//! `(seed, repetition)` pair so that any run can be reproduced exactly from
//! its manifest. The generator is ChaCha8: fast, portable, and with a
//! counter-based stream parameter that gives each repetition an independent
//! substream of the same seed without hashing tricks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete RNG used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Identifier recorded in run manifests so that archived results are
/// attributable to the exact generator and derivation scheme.
pub const RNG_ID: &str = "chacha8/seed_from_u64+set_stream";

/// Build the RNG for one repetition of a seeded experiment.
///
/// The base `seed` selects the key via `seed_from_u64`; `rep` selects the
/// ChaCha stream, so repetitions of the same experiment draw from
/// non-overlapping substreams and can be generated independently (for
/// example from parallel workers) while remaining reproducible.
pub fn rng_for_rep(seed: u64, rep: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_and_rep_reproduce_identical_draws() {
        let mut a = rng_for_rep(42, 7);
        let mut b = rng_for_rep(42, 7);
        let xs: Vec<u64> = (0..32).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..32).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn different_reps_diverge() {
        let mut a = rng_for_rep(42, 0);
        let mut b = rng_for_rep(42, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = rng_for_rep(1, 0);
        let mut b = rng_for_rep(2, 0);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }
}
