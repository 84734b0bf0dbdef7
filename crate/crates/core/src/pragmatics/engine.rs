use std::sync::Arc;

use log::warn;

use crate::domain::{reward, OptionSet, RewardVector, GRID_SIZE, NUM_OPTIONS, TIE_TOLERANCE};
use crate::lang::{Utterance, UtteranceSet};
use crate::math::softmax3;
use crate::models::{Listener, ModelBundle, SpeakerParams};
use crate::rng::Rng;

use super::config::{Beta, Inference, Likelihood, PragmaticsConfig, Proposal};
use super::grid::{GridSpeaker, RewardTables, UtteranceFactors};
use super::posterior::{PosteriorMode, RewardPosterior};
use super::InferenceError;

/// Boltzmann choice over option rewards. With `Beta::Infinite` the mass is
/// uniform over the optimal tie set.
pub fn p_opt_rewards(rewards: &[f64; NUM_OPTIONS], beta: Beta) -> [f64; NUM_OPTIONS] {
    match beta {
        Beta::Finite(b) => softmax3(rewards.map(|r| b * r)),
        Beta::Infinite => {
            let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied = rewards.map(|r| best - r <= TIE_TOLERANCE);
            let share = 1.0 / tied.iter().filter(|t| **t).count() as f64;
            tied.map(|t| if t { share } else { 0.0 })
        }
    }
}

pub fn p_opt(theta: &RewardVector, options: &OptionSet, beta: Beta) -> [f64; NUM_OPTIONS] {
    p_opt_rewards(&options.flights().map(|f| reward(theta, &f)), beta)
}

/// Result of one posterior update.
#[derive(Debug, Clone)]
pub struct Update {
    pub posterior: RewardPosterior,
    /// The likelihood vanished on the whole support and the prior was kept.
    pub degenerate: bool,
}

/// Everything about one observed (utterance, context) pair needed to
/// evaluate its likelihood at any grid point.
pub struct RoundTerms<'a> {
    speaker: &'a GridSpeaker,
    refer: [f64; NUM_OPTIONS],
    rewards: RewardTables,
    factors: UtteranceFactors,
    beta: Beta,
}

impl RoundTerms<'_> {
    pub fn refer(&self) -> [f64; NUM_OPTIONS] {
        self.refer
    }

    #[inline]
    pub fn action_at(&self, idx: usize) -> f64 {
        let popt = p_opt_rewards(&self.rewards.rewards(idx), self.beta);
        popt.iter().zip(&self.refer).map(|(p, r)| p * r).sum()
    }

    #[inline]
    pub fn reward_at(&self, idx: usize) -> f64 {
        self.speaker.prob_at(&self.factors, idx)
    }

    #[inline]
    pub fn likelihood_at(&self, kind: Likelihood, idx: usize) -> f64 {
        match kind {
            Likelihood::ActionOnly => self.action_at(idx),
            Likelihood::RewardOnly => self.reward_at(idx),
            Likelihood::Mixture { alpha } => alpha * self.action_at(idx) + (1.0 - alpha) * self.reward_at(idx),
        }
    }
}

/// The pragmatic listener: base listener, base reward speaker and the
/// utterance support both speaker components normalize over.
#[derive(Clone)]
pub struct Pragmatics {
    listener: Arc<dyn Listener>,
    speaker: GridSpeaker,
}

impl std::fmt::Debug for Pragmatics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pragmatics")
            .field("support", &self.support().len())
            .field("speaker_members", &self.speaker.num_members())
            .finish()
    }
}

impl Pragmatics {
    pub fn new(
        listener: Arc<dyn Listener>,
        speakers: Vec<SpeakerParams>,
        support: UtteranceSet,
    ) -> Result<Self, InferenceError> {
        let speaker = GridSpeaker::new(speakers, Arc::new(support))?;
        Ok(Self { listener, speaker })
    }

    pub fn from_bundle(bundle: &ModelBundle, support: UtteranceSet) -> Result<Self, InferenceError> {
        Self::new(Arc::new(bundle.listener()), bundle.speakers.clone(), support)
    }

    /// Same speaker and support with a different base listener.
    pub fn with_listener(&self, listener: Arc<dyn Listener>) -> Self {
        Self {
            listener,
            speaker: self.speaker.clone(),
        }
    }

    pub fn support(&self) -> &UtteranceSet {
        self.speaker.support()
    }

    pub fn listener(&self) -> &Arc<dyn Listener> {
        &self.listener
    }

    pub fn speaker(&self) -> &GridSpeaker {
        &self.speaker
    }

    /// Base-listener probabilities for every support utterance.
    pub fn support_listener_probs(&self, options: &OptionSet) -> Vec<[f64; NUM_OPTIONS]> {
        self.support()
            .iter()
            .map(|u| self.listener.option_probs(u, options))
            .collect()
    }

    /// `sum_u L(xi | u, M)` over the support, per option.
    pub fn refer_normalizers(&self, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        let mut z = [0.0; NUM_OPTIONS];
        for p in self.support_listener_probs(options) {
            for k in 0..NUM_OPTIONS {
                z[k] += p[k];
            }
        }
        z
    }

    fn refer_with(&self, u: &Utterance, options: &OptionSet, z: &[f64; NUM_OPTIONS]) -> [f64; NUM_OPTIONS] {
        let l = self.listener.option_probs(u, options);
        std::array::from_fn(|k| l[k] / z[k])
    }

    /// `p_refer(u | xi, M)` for each option, normalized over the support.
    pub fn p_refer_all(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        self.refer_with(u, options, &self.refer_normalizers(options))
    }

    pub fn p_refer(&self, u: &Utterance, xi: usize, options: &OptionSet) -> f64 {
        self.p_refer_all(u, options)[xi]
    }

    /// `p_refer(. | xi, M)` over the support.
    pub fn p_refer_distribution(&self, xi: usize, options: &OptionSet) -> Vec<f64> {
        let probs = self.support_listener_probs(options);
        let z: f64 = probs.iter().map(|p| p[xi]).sum();
        probs.iter().map(|p| p[xi] / z).collect()
    }

    pub fn p_action(&self, u: &Utterance, theta: &RewardVector, options: &OptionSet, beta: Beta) -> f64 {
        let refer = self.p_refer_all(u, options);
        let popt = p_opt(theta, options, beta);
        popt.iter().zip(&refer).map(|(p, r)| p * r).sum()
    }

    pub fn p_reward(&self, u: &Utterance, theta: &RewardVector) -> f64 {
        self.speaker.prob(u, theta.grid_index())
    }

    pub fn s1_prob(&self, u: &Utterance, theta: &RewardVector, options: &OptionSet, cfg: &PragmaticsConfig) -> f64 {
        let a = self.p_action(u, theta, options, cfg.beta);
        let r = self.p_reward(u, theta);
        cfg.alpha * a + (1.0 - cfg.alpha) * r
    }

    /// `p_S1(. | theta, M)` over the support.
    pub fn s1_distribution(&self, theta: &RewardVector, options: &OptionSet, alpha: f64, beta: Beta) -> Vec<f64> {
        let (action, reward) = self.component_distributions(theta, options, beta);
        action
            .iter()
            .zip(&reward)
            .map(|(a, r)| alpha * a + (1.0 - alpha) * r)
            .collect()
    }

    /// `(p_action(. | theta, M), p_reward(. | theta))` over the support.
    pub fn component_distributions(
        &self,
        theta: &RewardVector,
        options: &OptionSet,
        beta: Beta,
    ) -> (Vec<f64>, Vec<f64>) {
        let probs = self.support_listener_probs(options);
        let mut z = [0.0; NUM_OPTIONS];
        for p in &probs {
            for k in 0..NUM_OPTIONS {
                z[k] += p[k];
            }
        }
        let popt = p_opt(theta, options, beta);
        let action = probs
            .iter()
            .map(|p| (0..NUM_OPTIONS).map(|k| popt[k] * p[k] / z[k]).sum())
            .collect();
        (action, self.speaker.distribution(theta.grid_index()))
    }

    /// Max over the support of the gap between the ξ-factorized generative
    /// model and the mixture speaker.
    pub fn marginalization_identity_check(
        &self,
        theta: &RewardVector,
        options: &OptionSet,
        cfg: &PragmaticsConfig,
    ) -> f64 {
        let probs = self.support_listener_probs(options);
        let mut z = [0.0; NUM_OPTIONS];
        for p in &probs {
            for k in 0..NUM_OPTIONS {
                z[k] += p[k];
            }
        }
        let popt = p_opt(theta, options, cfg.beta);
        let reward = self.speaker.distribution(theta.grid_index());
        let a = cfg.alpha;
        probs
            .iter()
            .zip(&reward)
            .map(|(p, &r)| {
                let factorized: f64 = (0..NUM_OPTIONS)
                    .map(|k| popt[k] * (a * p[k] / z[k] + (1.0 - a) * r))
                    .sum();
                let action: f64 = (0..NUM_OPTIONS).map(|k| popt[k] * p[k] / z[k]).sum();
                let mixture = a * action + (1.0 - a) * r;
                (factorized - mixture).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn round_terms(&self, u: &Utterance, options: &OptionSet, beta: Beta) -> RoundTerms<'_> {
        RoundTerms {
            speaker: &self.speaker,
            refer: self.p_refer_all(u, options),
            rewards: RewardTables::new(options),
            factors: self.speaker.factors(u),
            beta,
        }
    }

    /// Likelihood of `u` at every grid point.
    pub fn likelihood_grid(&self, u: &Utterance, options: &OptionSet, beta: Beta, kind: Likelihood) -> Vec<f64> {
        let terms = self.round_terms(u, options, beta);
        (0..GRID_SIZE).map(|idx| terms.likelihood_at(kind, idx)).collect()
    }

    pub fn l2_update(
        &self,
        prior: &RewardPosterior,
        u: &Utterance,
        options: &OptionSet,
        cfg: &PragmaticsConfig,
        rng: &mut Rng,
    ) -> Result<Update, InferenceError> {
        cfg.validate()?;
        let terms = self.round_terms(u, options, cfg.beta);
        update_with_terms(prior, &terms, cfg.likelihood(), cfg.inference, rng)
    }

    /// Update with an explicit likelihood, e.g. the action-only or
    /// reward-only speaker.
    #[allow(clippy::too_many_arguments)]
    pub fn update_with(
        &self,
        prior: &RewardPosterior,
        u: &Utterance,
        options: &OptionSet,
        kind: Likelihood,
        beta: Beta,
        inference: Inference,
        rng: &mut Rng,
    ) -> Result<Update, InferenceError> {
        let terms = self.round_terms(u, options, beta);
        update_with_terms(prior, &terms, kind, inference, rng)
    }

    /// Left fold of [`Pragmatics::l2_update`]. The flag reports whether any
    /// round was degenerate.
    pub fn sequential_update(
        &self,
        prior: &RewardPosterior,
        rounds: &[(Utterance, OptionSet)],
        cfg: &PragmaticsConfig,
        rng: &mut Rng,
    ) -> Result<Update, InferenceError> {
        let mut current = Update {
            posterior: prior.clone(),
            degenerate: false,
        };
        for (u, options) in rounds {
            let next = self.l2_update(&current.posterior, u, options, cfg, rng)?;
            current = Update {
                posterior: next.posterior,
                degenerate: current.degenerate || next.degenerate,
            };
        }
        Ok(current)
    }
}

/// Bayes update of `prior` by the likelihood in `terms`.
pub fn update_with_terms(
    prior: &RewardPosterior,
    terms: &RoundTerms<'_>,
    kind: Likelihood,
    inference: Inference,
    rng: &mut Rng,
) -> Result<Update, InferenceError> {
    match inference {
        Inference::Exact => Ok(exact_update(prior, terms, kind)),
        Inference::Importance { n_samples, proposal } => {
            if n_samples == 0 {
                return Err(InferenceError::Config("n_samples must be at least 1".into()));
            }
            importance_update(prior, terms, kind, n_samples, proposal, rng)
        }
    }
}

fn kept(prior: &RewardPosterior) -> Update {
    warn!("likelihood vanished on the whole support; keeping the prior");
    Update {
        posterior: prior.clone(),
        degenerate: true,
    }
}

fn exact_update(prior: &RewardPosterior, terms: &RoundTerms<'_>, kind: Likelihood) -> Update {
    let products: Vec<f64> = prior
        .iter()
        .map(|(idx, w)| if w > 0.0 { w * terms.likelihood_at(kind, idx) } else { 0.0 })
        .collect();
    let top = products.iter().copied().fold(0.0, f64::max);
    if top > 1e-250 {
        let points = prior.points().map(<[u32]>::to_vec);
        if let Ok(posterior) = RewardPosterior::build(points, products, prior.mode(), prior.ess()) {
            return Update {
                posterior,
                degenerate: false,
            };
        }
    }
    // products near underflow: redo the update in log space
    let mut logw: Vec<f64> = prior
        .iter()
        .map(|(idx, w)| {
            if w > 0.0 {
                w.ln() + terms.likelihood_at(kind, idx).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return kept(prior);
    }
    for x in &mut logw {
        *x = (*x - max).exp();
    }
    let points = prior.points().map(<[u32]>::to_vec);
    match RewardPosterior::build(points, logw, prior.mode(), prior.ess()) {
        Ok(posterior) => Update {
            posterior,
            degenerate: false,
        },
        Err(_) => kept(prior),
    }
}

fn importance_update(
    prior: &RewardPosterior,
    terms: &RoundTerms<'_>,
    kind: Likelihood,
    n: usize,
    proposal: Proposal,
    rng: &mut Rng,
) -> Result<Update, InferenceError> {
    let (points, weights): (Vec<u32>, Vec<f64>) = match proposal {
        Proposal::Prior => {
            let mut cdf = Vec::with_capacity(prior.len());
            let mut acc = 0.0;
            for &w in prior.weights() {
                acc += w;
                cdf.push(acc);
            }
            (0..n)
                .map(|_| {
                    let target = rng.unit() * acc;
                    let i = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
                    let idx = prior.point(i);
                    (idx as u32, terms.likelihood_at(kind, idx))
                })
                .unzip()
        }
        Proposal::Uniform => {
            if !prior.is_full_grid() {
                return Err(InferenceError::ProposalUnavailable(
                    "uniform proposal needs a prior over the full grid".into(),
                ));
            }
            (0..n)
                .map(|_| {
                    let idx = rng.index(GRID_SIZE);
                    (idx as u32, prior.weights()[idx] * terms.likelihood_at(kind, idx))
                })
                .unzip()
        }
    };
    if !weights.iter().any(|w| *w > 0.0) {
        return Ok(kept(prior));
    }
    let posterior = RewardPosterior::build(Some(points), weights, PosteriorMode::Importance, Some(0.0))?;
    Ok(Update {
        posterior,
        degenerate: false,
    })
}
