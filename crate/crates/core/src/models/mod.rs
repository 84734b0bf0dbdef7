//! Base listener and speakers: log-linear scorers over sparse utterance
//! encodings, their training losses, and probability-averaging ensembles.

use std::sync::Arc;

use thiserror::Error;

use crate::domain::{OptionSet, NUM_OPTIONS};
use crate::lang::Utterance;

pub mod bundle;
pub mod ensemble;
pub mod features;
pub mod listener;
pub mod negatives;
pub mod noisy;
pub mod speaker;
pub mod train;

pub use bundle::{ModelBundle, BUNDLE_KIND};
pub use ensemble::{average_distributions, Ensemble};
pub use features::{Encoding, Featurizer};
pub use listener::{lbase_prob, listener_loss, listener_loss_and_grad, ListenerExample, ListenerParams};
pub use negatives::{attribute_mentions, hard_negatives, MAX_HARD_NEGATIVES};
pub use noisy::NoisyListener;
pub use speaker::{
    latent_loss_and_grad, sact_prob, sbase_prob, ActionSpeakerParams, LatentParams, SpeakerBatch, SpeakerExample,
    SpeakerParams, DEFAULT_TAU,
};
pub use train::{
    train_bundle, train_listener, train_speaker_latent, BundleReport, ListenerReport, SpeakerReport, TrainConfig, TrainedSpeakers};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("utterance support is empty")]
    EmptySupport,
    #[error("ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("ensemble members disagree on support size ({expected} vs {found})")]
    SupportMismatch { expected: usize, found: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything that maps an utterance in a context to a distribution over the
/// three options.
pub trait Listener: Send + Sync {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS];
}

impl<L: Listener + ?Sized> Listener for Arc<L> {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        (**self).option_probs(u, options)
    }
}

impl<L: Listener + ?Sized> Listener for Box<L> {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        (**self).option_probs(u, options)
    }
}

impl<L: Listener + ?Sized> Listener for &L {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        (**self).option_probs(u, options)
    }
}
