use crate::domain::{FeatureVec, OptionSet, NUM_FEATURES, NUM_OPTIONS};
use crate::lang::Utterance;
use crate::math::softmax3;

use super::features::{Encoding, Featurizer};
use super::Listener;

/// Base listener: `p(option | u, M) ∝ exp(A φ(option) · e(u))`, normalized
/// over the options in the context.
#[derive(Debug, Clone)]
pub struct ListenerParams {
    featurizer: Featurizer,
    /// Row-major `dim x 8`.
    weights: Vec<f64>,
}

impl ListenerParams {
    pub fn zeros(featurizer: Featurizer) -> Self {
        let weights = vec![0.0; featurizer.dim() * NUM_FEATURES];
        Self { featurizer, weights }
    }

    pub fn from_weights(featurizer: Featurizer, weights: Vec<f64>) -> Option<Self> {
        (weights.len() == featurizer.dim() * NUM_FEATURES).then_some(Self { featurizer, weights })
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.featurizer.dim(), NUM_FEATURES]
    }

    /// Utterance vector in flight-feature space.
    pub fn project(&self, enc: &Encoding) -> FeatureVec {
        project(&self.weights, enc)
    }

    pub fn probs_encoded(&self, enc: &Encoding, phis: &[FeatureVec; NUM_OPTIONS]) -> [f64; NUM_OPTIONS] {
        softmax3(logits(&self.weights, enc, phis))
    }
}

fn project(weights: &[f64], enc: &Encoding) -> FeatureVec {
    let mut v = [0.0; NUM_FEATURES];
    for j in enc.indices() {
        let row = &weights[j * NUM_FEATURES..(j + 1) * NUM_FEATURES];
        for (acc, w) in v.iter_mut().zip(row) {
            *acc += w;
        }
    }
    v
}

fn logits(weights: &[f64], enc: &Encoding, phis: &[FeatureVec; NUM_OPTIONS]) -> [f64; NUM_OPTIONS] {
    let v = project(weights, enc);
    phis.map(|phi| crate::domain::dot(&v, &phi))
}

impl Listener for ListenerParams {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        self.probs_encoded(&self.featurizer.encode(u), &options.features())
    }
}

/// Distribution of the base listener over the three options.
pub fn lbase_prob(params: &ListenerParams, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
    params.option_probs(u, options)
}

/// One supervised listener example.
#[derive(Debug, Clone)]
pub struct ListenerExample {
    pub encoding: Encoding,
    pub options: [FeatureVec; NUM_OPTIONS],
    pub target: usize,
}

/// Mean cross-entropy `-log p(target | u, M)` plus `l2/2 * |A|^2`, and its
/// gradient with respect to the flattened weights.
pub fn listener_loss_and_grad(weights: &[f64], data: &[ListenerExample], l2: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    let n = data.len().max(1) as f64;
    for ex in data {
        let z = logits(weights, &ex.encoding, &ex.options);
        let p = softmax3(z);
        loss -= p[ex.target].ln();
        // d loss / d z = p - onehot
        let mut dv = [0.0; NUM_FEATURES];
        for (k, phi) in ex.options.iter().enumerate() {
            let dz = p[k] - if k == ex.target { 1.0 } else { 0.0 };
            for (d, f) in dv.iter_mut().zip(phi) {
                *d += dz * f;
            }
        }
        for j in ex.encoding.indices() {
            let row = &mut grad[j * NUM_FEATURES..(j + 1) * NUM_FEATURES];
            for (g, d) in row.iter_mut().zip(&dv) {
                *g += d / n;
            }
        }
    }
    loss /= n;
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
        reg += w * w;
    }
    (loss + 0.5 * l2 * reg, grad)
}

/// Mean cross-entropy without regularization.
pub fn listener_loss(weights: &[f64], data: &[ListenerExample]) -> f64 {
    listener_loss_and_grad(weights, data, 0.0).0
}
