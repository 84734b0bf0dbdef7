use crate::domain::{OptionSet, NUM_OPTIONS};
use crate::lang::Utterance;
use crate::rng::{derive_seed, hash_str, mix64};

use super::Listener;

/// Deterministically corrupts a listener: for a fixed fraction of
/// (utterance, context) pairs the output distribution is rotated by one or
/// two positions, so the top choice moves to a different option.
#[derive(Debug, Clone)]
pub struct NoisyListener<L> {
    inner: L,
    corrupt_rate: f64,
    seed: u64,
}

impl<L> NoisyListener<L> {
    pub fn new(inner: L, corrupt_rate: f64, seed: u64) -> Self {
        Self {
            inner,
            corrupt_rate: corrupt_rate.clamp(0.0, 1.0),
            seed,
        }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    pub fn corrupt_rate(&self) -> f64 {
        self.corrupt_rate
    }

    fn rotation(&self, u: &Utterance, options: &OptionSet) -> usize {
        let mut h = derive_seed(self.seed, hash_str(&u.normalized()));
        for phi in options.features() {
            for x in phi {
                h = mix64(h ^ x.to_bits());
            }
        }
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        if unit < self.corrupt_rate {
            1 + (mix64(h) & 1) as usize
        } else {
            0
        }
    }
}

impl<L: Listener> Listener for NoisyListener<L> {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        let p = self.inner.option_probs(u, options);
        let r = self.rotation(u, options);
        std::array::from_fn(|i| p[(i + NUM_OPTIONS - r) % NUM_OPTIONS])
    }
}
