//! Pragmatic reward inference from language.
//!
//! A listener infers a user's linear reward over flight features by
//! reasoning about a speaker whose utterances both steer the current choice
//! and describe the underlying preferences. The crate bundles the flight
//! domain, a controlled utterance language, trainable base listener and
//! speaker models, exact and importance-sampled posterior inference, the
//! evaluation protocol, and the multi-round booking game.

pub mod corpus;
pub mod domain;
pub mod eval;
pub mod game;
pub mod lang;
pub mod math;
pub mod models;
pub mod pragmatics;
pub mod rng;

pub use corpus::{ingest_corpus, Corpus, CorpusRow};
pub use domain::{Carrier, Flight, OptionSet, RewardVector};
pub use lang::{Grammar, SemanticForm, Utterance, UtteranceSet};
pub use models::Listener;
pub use rng::Rng;
