//! The FlightPref game: rounds and scoring, simulated users, synthetic
//! corpora and logged sessions.

use thiserror::Error;

use crate::pragmatics::InferenceError;

pub mod datagen;
pub mod session;
pub mod speakers;
pub mod state;

pub use datagen::{
    game_reward, games_from_corpus, games_to_corpus, generate_corpus, generate_games, DatagenConfig, GameRecord,
    ObservedRound,
};
pub use session::{CreateSession, Session, SessionEvent, SessionStore, UtteranceResponse};
pub use speakers::{describing_clause, synthetic_utterance, SyntheticSpeaker};
pub use state::{
    play_game, round_options, step_round, ActionResult, AssistantAction, AssistantPolicy, Game, GameState, Outcome,
    Phase, RoundRecord, ScoreTally, UtteranceReason, DEFAULT_THRESHOLD, POINTS_ASK, POINTS_CORRECT, POINTS_INCORRECT,
    ROUNDS_PER_GAME,
};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("expected phase {expected}, game is in {phase:?}")]
    WrongPhase { expected: &'static str, phase: Phase },
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("this speaker needs trained models")]
    ModelsRequired,
    #[error("speaker distribution has no mass")]
    EmptyDistribution,
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` already exists")]
    SessionExists(String),
    #[error("session `{0}` lock is poisoned")]
    Poisoned(String),
    #[error("replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
