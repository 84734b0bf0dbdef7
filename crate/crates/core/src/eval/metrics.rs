use serde::{Deserialize, Serialize};

use crate::domain::{argmax_options, optimal_option, sample_option_set, FeatureVec, OptionSet, RewardVector, NUM_FEATURES};
use crate::math::{mean, std_error};
use crate::rng::{derive_seed, Rng};

pub const HELD_OUT_SETS: usize = 1000;

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            se: std_error(xs),
            n: xs.len(),
        }
    }
}

/// A fixed batch of option sets for scoring reward estimates.
#[derive(Debug, Clone)]
pub struct HeldOutSets {
    sets: Vec<OptionSet>,
}

impl HeldOutSets {
    pub fn sample(n: usize, rng: &mut Rng) -> Self {
        Self {
            sets: (0..n).map(|_| sample_option_set(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[OptionSet] {
        &self.sets
    }

    /// Fraction of sets where `theta_hat` and `theta_star` pick the same
    /// option, ties going to the lowest index under both.
    pub fn accuracy(&self, theta_hat: &FeatureVec, theta_star: &RewardVector) -> f64 {
        if self.sets.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .sets
            .iter()
            .filter(|m| argmax_options(theta_hat, m).index == optimal_option(theta_star, m).index)
            .count();
        hits as f64 / self.sets.len() as f64
    }
}

pub fn held_out_accuracy(theta_hat: &FeatureVec, theta_star: &RewardVector, n_sets: usize, rng: &mut Rng) -> f64 {
    HeldOutSets::sample(n_sets.max(1), rng).accuracy(theta_hat, theta_star)
}

pub fn l2_distance(a: &FeatureVec, b: &FeatureVec) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Knows `k` randomly chosen weights of `theta_star` exactly and guesses 0
/// (the mean of the uniform grid prior) for the rest.
pub fn oracle_k_baseline(theta_star: &RewardVector, k: usize, rng: &mut Rng) -> FeatureVec {
    let mut est = [0.0; NUM_FEATURES];
    for i in rng.choose_distinct(NUM_FEATURES, k.min(NUM_FEATURES)) {
        est[i] = theta_star.weights()[i];
    }
    est
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub k: usize,
    pub accuracy: MeanSe,
}

/// Oracle-k accuracy for k = 0..=8 over `n_thetas` sampled rewards, each
/// scored on its own `n_sets` option sets shared across k.
pub fn oracle_k_curve(n_thetas: usize, n_sets: usize, seed: u64) -> Vec<OraclePoint> {
    let mut per_k: Vec<Vec<f64>> = (0..=NUM_FEATURES).map(|_| Vec::with_capacity(n_thetas)).collect();
    for t in 0..n_thetas {
        let mut rng = Rng::new(derive_seed(seed, t as u64));
        let theta = crate::domain::sample_reward(&mut rng);
        let sets = HeldOutSets::sample(n_sets, &mut rng);
        for (k, acc) in per_k.iter_mut().enumerate() {
            let est = oracle_k_baseline(&theta, k, &mut rng);
            acc.push(sets.accuracy(&est, &theta));
        }
    }
    per_k
        .iter()
        .enumerate()
        .map(|(k, xs)| OraclePoint {
            k,
            accuracy: MeanSe::of(xs),
        })
        .collect()
}
