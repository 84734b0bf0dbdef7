//! Pragmatic speaker and listener over the discrete reward grid, with exact
//! and importance-sampled posterior updates.

use thiserror::Error;

use crate::models::ModelError;

pub mod config;
pub mod engine;
pub mod grid;
pub mod posterior;

pub use config::{Beta, Inference, Likelihood, PragmaticsConfig, Proposal};
pub use engine::{p_opt, p_opt_rewards, update_with_terms, Pragmatics, RoundTerms, Update};
pub use grid::{GridSpeaker, RewardTables};
pub use posterior::{
    marginal_tv, option_optimality_prob, posterior_marginals, posterior_mean, PosteriorMode, PosteriorSnapshot,
    RewardPosterior,
};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("posterior is not normalized (total weight {0})")]
    Unnormalized(f64),
    #[error("proposal unavailable: {0}")]
    ProposalUnavailable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
