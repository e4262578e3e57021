//! Deterministic random streams derived from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splits one master seed into independent, reproducible ChaCha streams.
///
/// Streams are addressed by a `(purpose, index)` pair so that unrelated
/// computations never share random numbers by accident, while repeated
/// calls with the same address replay the same sequence (common random
/// numbers across a parameter sweep).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng.set_stream(index);
        rng
    }

    /// A child seed stream, used to hand a sub-computation its own namespace.
    pub fn child(&self, purpose: u64) -> SeedStream {
        let mut z = self.master ^ purpose.wrapping_add(0x632b_e59b_d9b4_e019);
        // splitmix64 finalizer
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        SeedStream { master: z ^ (z >> 31) }
    }
}

/// Stream purposes used across the crate.
pub(crate) mod purpose {
    pub const DEMAPPER: u64 = 2;
    pub const GMI: u64 = 3;
    pub const ALPHA: u64 = 4;
    pub const GEXIT: u64 = 5;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_address_replays() {
        let s = SeedStream::new(7);
        let a: Vec<u64> = (0..4).map(|_| 0).scan(s.stream(1, 3), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(s.stream(1, 3), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        let c: u64 = s.stream(1, 4).random();
        assert_ne!(a[0], c);
        assert_ne!(s.child(1).master(), s.child(2).master());
    }
}
