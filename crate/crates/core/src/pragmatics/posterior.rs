use serde::{Deserialize, Serialize};

use crate::domain::{best_option, FeatureVec, OptionSet, RewardVector, GRID_SIZE, NUM_FEATURES, NUM_OPTIONS};

use super::grid::{split, RewardTables, HALF};
use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMode {
    Exact,
    Importance,
}

/// Weighted reward hypotheses: either every grid point (in grid-index
/// order) or an explicit list of grid points, possibly with repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardPosterior {
    points: Option<Vec<u32>>,
    weights: Vec<f64>,
    mode: PosteriorMode,
    ess: Option<f64>,
}

/// Serialized view of a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub mean: FeatureVec,
    pub marginals: [[f64; 5]; NUM_FEATURES],
    pub mode: PosteriorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
}

impl RewardPosterior {
    pub fn uniform() -> Self {
        Self {
            points: None,
            weights: vec![1.0 / GRID_SIZE as f64; GRID_SIZE],
            mode: PosteriorMode::Exact,
            ess: None,
        }
    }

    pub fn point_mass(theta: &RewardVector) -> Self {
        Self {
            points: Some(vec![theta.grid_index() as u32]),
            weights: vec![1.0],
            mode: PosteriorMode::Exact,
            ess: None,
        }
    }

    /// Normalizes nonnegative grid weights.
    pub fn from_grid_weights(weights: Vec<f64>) -> Result<Self, InferenceError> {
        if weights.len() != GRID_SIZE {
            return Err(InferenceError::Config(format!(
                "expected {GRID_SIZE} grid weights, got {}",
                weights.len()
            )));
        }
        Self::build(None, weights, PosteriorMode::Exact, None)
    }

    /// Normalizes nonnegative weights on explicit grid points.
    pub fn from_points(points: Vec<u32>, weights: Vec<f64>, mode: PosteriorMode) -> Result<Self, InferenceError> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(InferenceError::Config("points and weights must be nonempty and aligned".into()));
        }
        if points.iter().any(|&p| p as usize >= GRID_SIZE) {
            return Err(InferenceError::Config("point outside the reward grid".into()));
        }
        let ess = (mode == PosteriorMode::Importance).then_some(0.0);
        Self::build(Some(points), weights, mode, ess)
    }

    pub(crate) fn build(
        points: Option<Vec<u32>>,
        mut weights: Vec<f64>,
        mode: PosteriorMode,
        ess: Option<f64>,
    ) -> Result<Self, InferenceError> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(InferenceError::Unnormalized(f64::NAN));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(InferenceError::Unnormalized(total));
        }
        for w in &mut weights {
            *w /= total;
        }
        let ess = ess.map(|_| 1.0 / weights.iter().map(|w| w * w).sum::<f64>());
        Ok(Self {
            points,
            weights,
            mode,
            ess,
        })
    }

    pub fn mode(&self) -> PosteriorMode {
        self.mode
    }

    pub fn ess(&self) -> Option<f64> {
        self.ess
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_full_grid(&self) -> bool {
        self.points.is_none()
    }

    /// Grid index of the i-th hypothesis.
    #[inline]
    pub fn point(&self, i: usize) -> usize {
        match &self.points {
            None => i,
            Some(p) => p[i] as usize,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (self.point(i), w))
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_weight() - 1.0).abs() <= 1e-9
    }

    /// Probability the posterior assigns to one grid point.
    pub fn prob_of(&self, theta: &RewardVector) -> f64 {
        let idx = theta.grid_index();
        match &self.points {
            None => self.weights[idx],
            Some(p) => p
                .iter()
                .zip(&self.weights)
                .filter(|(q, _)| **q as usize == idx)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Per-feature mass on each of the five grid values.
    pub fn marginals(&self) -> [[f64; 5]; NUM_FEATURES] {
        // mass on each half index, then spread over that half's digits
        let (mut hi_mass, mut lo_mass) = (vec![0.0; HALF], vec![0.0; HALF]);
        match &self.points {
            None => {
                for (h, row) in self.weights.chunks(HALF).enumerate() {
                    hi_mass[h] = row.iter().sum();
                    for (l, w) in row.iter().enumerate() {
                        lo_mass[l] += w;
                    }
                }
            }
            Some(points) => {
                for (&idx, &w) in points.iter().zip(&self.weights) {
                    let (h, l) = split(idx as usize);
                    hi_mass[h] += w;
                    lo_mass[l] += w;
                }
            }
        }
        let half_dims = NUM_FEATURES / 2;
        let mut m = [[0.0; 5]; NUM_FEATURES];
        for (offset, mass) in [(0, &hi_mass), (half_dims, &lo_mass)] {
            for (h, &w) in mass.iter().enumerate() {
                let mut rest = h;
                for f in (offset..offset + half_dims).rev() {
                    m[f][rest % 5] += w;
                    rest /= 5;
                }
            }
        }
        m
    }

    pub fn mean(&self) -> FeatureVec {
        mean_of_marginals(&self.marginals())
    }

    /// Highest-weight grid point, lowest index on ties.
    pub fn map_estimate(&self) -> RewardVector {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        RewardVector::from_grid_index(self.point(best)).expect("points are on the grid")
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        let marginals = self.marginals();
        PosteriorSnapshot {
            mean: mean_of_marginals(&marginals),
            marginals,
            mode: self.mode,
            ess: self.ess,
        }
    }

    /// Same hypotheses with new unnormalized weights; `None` when they are
    /// all zero.
    pub fn reweighted(&self, weights: Vec<f64>) -> Option<Self> {
        if weights.len() != self.weights.len() {
            return None;
        }
        Self::build(self.points.clone(), weights, self.mode, self.ess).ok()
    }

    pub(crate) fn points(&self) -> Option<&[u32]> {
        self.points.as_deref()
    }

}

fn mean_of_marginals(marg: &[[f64; 5]; NUM_FEATURES]) -> FeatureVec {
    std::array::from_fn(|f| {
        marg[f]
            .iter()
            .zip(crate::domain::GRID_VALUES)
            .map(|(p, v)| p * v)
            .sum()
    })
}

/// Weighted mean of the posterior; fails on unnormalized input.
pub fn posterior_mean(p: &RewardPosterior) -> Result<FeatureVec, InferenceError> {
    if !p.is_normalized() {
        return Err(InferenceError::Unnormalized(p.total_weight()));
    }
    Ok(p.mean())
}

pub fn posterior_marginals(p: &RewardPosterior) -> Result<[[f64; 5]; NUM_FEATURES], InferenceError> {
    if !p.is_normalized() {
        return Err(InferenceError::Unnormalized(p.total_weight()));
    }
    Ok(p.marginals())
}

/// Posterior probability that each option is optimal (lowest index among
/// tied optima).
pub fn option_optimality_prob(posterior: &RewardPosterior, options: &OptionSet) -> [f64; NUM_OPTIONS] {
    let tables = RewardTables::new(options);
    let mut out = [0.0; NUM_OPTIONS];
    for (idx, w) in posterior.iter() {
        if w == 0.0 {
            continue;
        }
        out[best_option(&tables.rewards(idx))] += w;
    }
    out
}

/// Total variation distance between per-feature marginals, maximized over
/// features.
pub fn marginal_tv(a: &RewardPosterior, b: &RewardPosterior) -> f64 {
    let (ma, mb) = (a.marginals(), b.marginals());
    ma.iter()
        .zip(&mb)
        .map(|(x, y)| 0.5 * x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_digit(idx: usize, feature: usize) -> usize {
        (idx / 5usize.pow((NUM_FEATURES - 1 - feature) as u32)) % 5
    }

    #[test]
    fn uniform_mean_is_zero_and_marginals_flat() {
        let p = RewardPosterior::uniform();
        assert!(p.mean().iter().all(|m| m.abs() < 1e-12));
        for row in p.marginals() {
            for v in row {
                assert!((v - 0.2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_indicators() {
        let theta = RewardVector::new([1.0, -0.5, 0.0, 0.5, -1.0, 0.0, 1.0, 0.5]).unwrap();
        let p = RewardPosterior::point_mass(&theta);
        assert_eq!(&p.mean(), theta.weights());
        for (f, row) in p.marginals().iter().enumerate() {
            let digit = grid_digit(theta.grid_index(), f);
            for (v, mass) in row.iter().enumerate() {
                assert_eq!(*mass, if v == digit { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(p.map_estimate(), theta);
    }

    #[test]
    fn unnormalized_weights_rejected() {
        assert!(RewardPosterior::from_points(vec![0, 1], vec![0.0, 0.0], PosteriorMode::Exact).is_err());
    }
}
