//! Seeded random streams.
//!
//! Every consumer draws from ChaCha8 keyed by the run seed, on its own
//! stream id, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose-specific stream selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Model parameter initialization.
    Init = 1,
    /// Labeled / unlabeled target split.
    Split = 2,
    /// Synthetic task generation.
    Synth = 3,
}

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, purpose: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = stream(7, Stream::Init).next_u64();
        let b = stream(7, Stream::Split).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, stream(7, Stream::Init).next_u64());
    }
}
