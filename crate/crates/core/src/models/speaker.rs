use crate::domain::{Flight, OptionSet, RewardVector, NUM_FEATURES};
use crate::lang::UtteranceSet;
use crate::math::{sigmoid, softmax};

use super::features::{Encoding, Featurizer};
use super::ModelError;

/// Reward-speaker input: the reward weights and a constant.
pub const REWARD_INPUT: usize = NUM_FEATURES + 1;
/// Action-speaker input: features of the optimal flight, the same features
/// relative to the context mean, and a constant.
pub const ACTION_INPUT: usize = 2 * NUM_FEATURES + 1;
pub const DEFAULT_TAU: f64 = 3.0;

pub fn reward_input(theta: &RewardVector) -> [f64; REWARD_INPUT] {
    let mut x = [1.0; REWARD_INPUT];
    x[..NUM_FEATURES].copy_from_slice(theta.weights());
    x
}

pub fn action_input(xi_star: &Flight, options: &OptionSet) -> [f64; ACTION_INPUT] {
    let phi = xi_star.features();
    let all = options.features();
    let mut x = [1.0; ACTION_INPUT];
    for i in 0..NUM_FEATURES {
        let mean = all.iter().map(|f| f[i]).sum::<f64>() / all.len() as f64;
        x[i] = phi[i];
        x[NUM_FEATURES + i] = phi[i] - mean;
    }
    x
}

/// Sums the weight rows of the active features: the utterance's
/// coefficient vector over the model input.
pub(crate) fn coefficients<const N: usize>(weights: &[f64], enc: &Encoding) -> [f64; N] {
    let mut c = [0.0; N];
    for j in enc.indices() {
        for (acc, w) in c.iter_mut().zip(&weights[j * N..(j + 1) * N]) {
            *acc += w;
        }
    }
    c
}

pub(crate) fn dot_n<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Base reward speaker: `p(u | theta) ∝ exp(B psi(theta) · e(u) / tau)`.
#[derive(Debug, Clone)]
pub struct SpeakerParams {
    featurizer: Featurizer,
    /// Row-major `dim x REWARD_INPUT`.
    weights: Vec<f64>,
    tau: f64,
}

impl SpeakerParams {
    pub fn zeros(featurizer: Featurizer, tau: f64) -> Self {
        let weights = vec![0.0; featurizer.dim() * REWARD_INPUT];
        Self {
            featurizer,
            weights,
            tau,
        }
    }

    pub fn from_weights(featurizer: Featurizer, weights: Vec<f64>, tau: f64) -> Option<Self> {
        (weights.len() == featurizer.dim() * REWARD_INPUT && tau > 0.0).then_some(Self {
            featurizer,
            weights,
            tau,
        })
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

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) {
        assert!(tau > 0.0, "temperature must be positive");
        self.tau = tau;
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.featurizer.dim(), REWARD_INPUT]
    }

    /// Unscaled coefficients `c` with logit `c · psi(theta) / tau`.
    pub fn coefficients(&self, enc: &Encoding) -> [f64; REWARD_INPUT] {
        coefficients(&self.weights, enc)
    }

    pub fn logit(&self, enc: &Encoding, theta: &RewardVector) -> f64 {
        dot_n(&self.coefficients(enc), &reward_input(theta)) / self.tau
    }

    pub fn distribution(&self, theta: &RewardVector, support: &UtteranceSet) -> Result<Vec<f64>, ModelError> {
        if support.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        let logits: Vec<f64> = support
            .iter()
            .map(|u| self.logit(&self.featurizer.encode(u), theta))
            .collect();
        Ok(softmax(&logits))
    }
}

/// Distribution of the base reward speaker over `support`.
pub fn sbase_prob(params: &SpeakerParams, theta: &RewardVector, support: &UtteranceSet) -> Result<Vec<f64>, ModelError> {
    params.distribution(theta, support)
}

/// Base action speaker: `p(u | xi*, M) ∝ exp(C chi(xi*, M) · e(u))`. Only
/// used to explain action-descriptive utterances during speaker training.
#[derive(Debug, Clone)]
pub struct ActionSpeakerParams {
    featurizer: Featurizer,
    /// Row-major `dim x ACTION_INPUT`.
    weights: Vec<f64>,
}

impl ActionSpeakerParams {
    pub fn zeros(featurizer: Featurizer) -> Self {
        let weights = vec![0.0; featurizer.dim() * ACTION_INPUT];
        Self { featurizer, weights }
    }

    pub fn from_weights(featurizer: Featurizer, weights: Vec<f64>) -> Option<Self> {
        (weights.len() == featurizer.dim() * ACTION_INPUT).then_some(Self { featurizer, weights })
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
        [self.featurizer.dim(), ACTION_INPUT]
    }

    pub fn distribution(
        &self,
        xi_star: &Flight,
        options: &OptionSet,
        support: &UtteranceSet,
    ) -> Result<Vec<f64>, ModelError> {
        if support.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        let x = action_input(xi_star, options);
        let logits: Vec<f64> = support
            .iter()
            .map(|u| dot_n(&coefficients(&self.weights, &self.featurizer.encode(u)), &x))
            .collect();
        Ok(softmax(&logits))
    }
}

pub fn sact_prob(
    params: &ActionSpeakerParams,
    xi_star: &Flight,
    options: &OptionSet,
    support: &UtteranceSet,
) -> Result<Vec<f64>, ModelError> {
    params.distribution(xi_star, options, support)
}

/// One speaker-training example: the observed utterance and the candidates
/// it is normalized against, as indices into a shared encoding table.
#[derive(Debug, Clone)]
pub struct SpeakerExample {
    pub normalizer: Vec<usize>,
    /// Position of the observed utterance within `normalizer`.
    pub target: usize,
    pub reward_input: [f64; REWARD_INPUT],
    pub action_input: [f64; ACTION_INPUT],
}

#[derive(Debug, Clone)]
pub struct SpeakerBatch {
    pub encodings: Vec<Encoding>,
    pub examples: Vec<SpeakerExample>,
}

/// Flattened parameters of the jointly trained speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    pub reward: Vec<f64>,
    pub action: Vec<f64>,
    /// `p(reward-descriptive) = sigmoid(mixture_logit)`.
    pub mixture_logit: f64,
}

impl LatentParams {
    pub fn zeros(dim: usize, mixture_logit: f64) -> Self {
        Self {
            reward: vec![0.0; dim * REWARD_INPUT],
            action: vec![0.0; dim * ACTION_INPUT],
            mixture_logit,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.reward.clone();
        v.extend_from_slice(&self.action);
        v.push(self.mixture_logit);
        v
    }

    pub fn unflatten(&self, flat: &[f64]) -> Self {
        let nr = self.reward.len();
        let na = self.action.len();
        assert_eq!(flat.len(), nr + na + 1);
        Self {
            reward: flat[..nr].to_vec(),
            action: flat[nr..nr + na].to_vec(),
            mixture_logit: flat[nr + na],
        }
    }
}

/// Per-example likelihood terms, used by the loss and by diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct LatentTerms {
    pub reward_prob: f64,
    pub action_prob: f64,
}

pub fn latent_terms(params: &LatentParams, batch: &SpeakerBatch, tau: f64) -> Vec<LatentTerms> {
    let cb: Vec<[f64; REWARD_INPUT]> = batch.encodings.iter().map(|e| coefficients(&params.reward, e)).collect();
    let ca: Vec<[f64; ACTION_INPUT]> = batch.encodings.iter().map(|e| coefficients(&params.action, e)).collect();
    batch
        .examples
        .iter()
        .map(|ex| {
            let zb: Vec<f64> = ex.normalizer.iter().map(|&u| dot_n(&cb[u], &ex.reward_input) / tau).collect();
            let za: Vec<f64> = ex.normalizer.iter().map(|&u| dot_n(&ca[u], &ex.action_input)).collect();
            LatentTerms {
                reward_prob: softmax(&zb)[ex.target],
                action_prob: softmax(&za)[ex.target],
            }
        })
        .collect()
}

/// Mean of `-log sum_lambda p(lambda) p(u | theta, xi*, M, lambda)` plus
/// `l2/2` times the squared norm of both weight matrices, with its gradient.
pub fn latent_loss_and_grad(params: &LatentParams, batch: &SpeakerBatch, tau: f64, l2: f64) -> (f64, LatentParams) {
    let n = batch.examples.len().max(1) as f64;
    let cb: Vec<[f64; REWARD_INPUT]> = batch.encodings.iter().map(|e| coefficients(&params.reward, e)).collect();
    let ca: Vec<[f64; ACTION_INPUT]> = batch.encodings.iter().map(|e| coefficients(&params.action, e)).collect();
    let mut dcb = vec![[0.0; REWARD_INPUT]; cb.len()];
    let mut dca = vec![[0.0; ACTION_INPUT]; ca.len()];
    let s = sigmoid(params.mixture_logit);
    let mut loss = 0.0;
    let mut dl = 0.0;
    for ex in &batch.examples {
        let zb: Vec<f64> = ex.normalizer.iter().map(|&u| dot_n(&cb[u], &ex.reward_input) / tau).collect();
        let za: Vec<f64> = ex.normalizer.iter().map(|&u| dot_n(&ca[u], &ex.action_input)).collect();
        let pb = softmax(&zb);
        let pa = softmax(&za);
        let (b, a) = (pb[ex.target], pa[ex.target]);
        let m = s * b + (1.0 - s) * a;
        loss -= m.ln();
        let rb = s * b / m;
        let ra = (1.0 - s) * a / m;
        for (k, &u) in ex.normalizer.iter().enumerate() {
            let hit = if k == ex.target { 1.0 } else { 0.0 };
            let gzb = -rb * (hit - pb[k]) / n;
            let gza = -ra * (hit - pa[k]) / n;
            for (d, x) in dcb[u].iter_mut().zip(&ex.reward_input) {
                *d += gzb * x / tau;
            }
            for (d, x) in dca[u].iter_mut().zip(&ex.action_input) {
                *d += gza * x;
            }
        }
        dl -= s * (1.0 - s) * (b - a) / m / n;
    }
    loss /= n;
    let mut grad = LatentParams {
        reward: vec![0.0; params.reward.len()],
        action: vec![0.0; params.action.len()],
        mixture_logit: dl,
    };
    for (enc, d) in batch.encodings.iter().zip(&dcb) {
        for j in enc.indices() {
            for (g, x) in grad.reward[j * REWARD_INPUT..(j + 1) * REWARD_INPUT].iter_mut().zip(d) {
                *g += x;
            }
        }
    }
    for (enc, d) in batch.encodings.iter().zip(&dca) {
        for j in enc.indices() {
            for (g, x) in grad.action[j * ACTION_INPUT..(j + 1) * ACTION_INPUT].iter_mut().zip(d) {
                *g += x;
            }
        }
    }
    let mut reg = 0.0;
    for (g, w) in grad.reward.iter_mut().zip(&params.reward).chain(grad.action.iter_mut().zip(&params.action)) {
        *g += l2 * w;
        reg += w * w;
    }
    (loss + 0.5 * l2 * reg, grad)
}
