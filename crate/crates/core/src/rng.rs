//! Deterministic stream derivation.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose
//! 256-bit key is expanded from `(seed, stream id)` by SplitMix64. The
//! derivation is a pure function of those two integers, so results do not
//! depend on scheduling or worker count, and the same seed always
//! reproduces the same stream bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step (Steele, Lea, Flood 2014 reference constants).
pub fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
}

/// One SplitMix64 output for the given state.
pub fn splitmix64_next(state: &mut u64) -> u64 {
    splitmix64(state);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-separated stream identifiers, so that distinct consumers of one
/// user-facing seed never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    /// Markov-chain state stream for a trajectory.
    ChainStates,
    /// Covariate stream of the Metropolis-Hastings sampler.
    Covariates,
    /// Additive-noise stream of the regression model.
    Noise,
    /// One coupled duo (indexed).
    CouplingPair(u64),
    /// Chain generation.
    InstanceGen,
    /// Per-state map generation for a random instance.
    ProblemGen,
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::ChainStates => 0x01,
            StreamId::Covariates => 0x02,
            StreamId::Noise => 0x03,
            StreamId::CouplingPair(p) => 0x1000 + p,
            StreamId::InstanceGen => 0x04,
            StreamId::ProblemGen => 0x05,
        }
    }
}

/// Derive the ChaCha8 generator for `(seed, id)`.
pub fn stream(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut state = seed ^ id.tag().wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64_next(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let mut a = stream(42, StreamId::ChainStates);
        let mut b = stream(42, StreamId::ChainStates);
        for _ in 0..100 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn streams_differ_across_ids_and_seeds() {
        let mut a = stream(42, StreamId::ChainStates);
        let mut b = stream(42, StreamId::Noise);
        let mut c = stream(43, StreamId::ChainStates);
        let (x, y, z) = (a.gen::<u64>(), b.gen::<u64>(), c.gen::<u64>());
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn splitmix_reference_output() {
        // First output for state 0, per the published reference sequence.
        let mut s = 0u64;
        assert_eq!(splitmix64_next(&mut s), 0xE220_A839_7B1D_CDAF);
    }
}
