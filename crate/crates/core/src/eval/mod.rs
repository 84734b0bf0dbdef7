//! Held-out accuracy, reward distance, oracle baselines, ablations and
//! paired significance tests over recorded games.

use thiserror::Error;

use crate::pragmatics::InferenceError;

pub mod bootstrap;
pub mod metrics;
pub mod report;
pub mod run;

pub use bootstrap::{paired_bootstrap, MIN_RESAMPLES};
pub use metrics::{
    held_out_accuracy, l2_distance, oracle_k_baseline, oracle_k_curve, HeldOutSets, MeanSe, OraclePoint,
    HELD_OUT_SETS,
};
pub use report::{bin_of, Comparison, CurvePoint, EvalReport, ModelSummary, RunMeta, LAST_BIN};
pub use run::{
    evaluate, game_sets, known_action_ablation, oracle_switch, run_models, switch_runs, EvalConfig, ModelRun,
    ModelSpec, RoundScore, ACTION_ONLY, FULL, KNOWN_ACTION, ORACLE_SWITCH, REWARD_ONLY,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("paired score lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {MIN_RESAMPLES} bootstrap resamples, got {0}")]
    TooFewResamples(usize),
    #[error("no games to evaluate")]
    NoGames,
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}
