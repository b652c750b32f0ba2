//! Counter-based seed splitting.
//!
//! Every random stream is addressed by the master seed and a path of
//! counters (replica index, layer index, ...). The stream seed is a pure
//! function of that address, so any prefix of a layered computation can be
//! regenerated without drawing the layers after it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used for all sampling.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Address of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        Self(mix(master_seed.wrapping_add(GOLDEN)))
    }

    /// Child stream number `index`.
    pub fn child(self, index: u64) -> Self {
        Self(mix(self.0 ^ mix(index.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    /// Child keyed by a static tag, for separating purposes (e.g. "locations"
    /// vs "masses") under the same counter.
    pub fn tagged(self, tag: &str) -> Self {
        let h = tag
            .bytes()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3));
        self.child(h)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let root = StreamKey::root(42);
        let a: u64 = root.child(3).rng().random();
        let b: u64 = StreamKey::root(42).child(3).rng().random();
        let c: u64 = root.child(4).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(root.child(1).child(2), root.child(2).child(1));
        assert_ne!(root.tagged("x"), root.tagged("y"));
    }
}
