use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{optimal_option, RewardVector};
use crate::game::GameRecord;
use crate::math::argmax;
use crate::pragmatics::{update_with_terms, Beta, Inference, Likelihood, Pragmatics, RewardPosterior};
use crate::rng::{derive_seed, hash_str, Rng};

use super::bootstrap::paired_bootstrap;
use super::metrics::{l2_distance, HeldOutSets, HELD_OUT_SETS};
use super::report::{Comparison, EvalReport, ModelSummary, RunMeta};
use super::EvalError;

pub const FULL: &str = "full";
pub const ACTION_ONLY: &str = "action_only";
pub const REWARD_ONLY: &str = "reward_only";
pub const ORACLE_SWITCH: &str = "oracle_switch";
pub const KNOWN_ACTION: &str = "known_action";

const SETS_STREAM: u64 = 0x5e75;
const UPDATE_STREAM: u64 = 0x0bd7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub likelihood: Likelihood,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, likelihood: Likelihood) -> Self {
        Self {
            name: name.into(),
            likelihood,
        }
    }

    pub fn full(alpha: f64) -> Self {
        Self::new(FULL, Likelihood::Mixture { alpha })
    }

    pub fn action_only() -> Self {
        Self::new(ACTION_ONLY, Likelihood::ActionOnly)
    }

    pub fn reward_only() -> Self {
        Self::new(REWARD_ONLY, Likelihood::RewardOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub n_sets: usize,
    pub alpha: f64,
    pub beta: Beta,
    pub inference: Inference,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sets: HELD_OUT_SETS,
            alpha: 0.5,
            beta: Beta::Infinite,
            inference: Inference::Exact,
            bootstrap_resamples: 10_000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_sets == 0 {
            return Err(EvalError::Config("n_sets must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EvalError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.beta.is_valid() {
            return Err(EvalError::Config("beta must be positive".into()));
        }
        if self.bootstrap_resamples < super::bootstrap::MIN_RESAMPLES {
            return Err(EvalError::TooFewResamples(self.bootstrap_resamples));
        }
        Ok(())
    }

    /// Short hex digest of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn models(&self) -> Vec<ModelSpec> {
        vec![ModelSpec::full(self.alpha), ModelSpec::action_only(), ModelSpec::reward_only()]
    }
}

/// Scores of one model after one observed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundScore {
    pub game_id: String,
    pub round: usize,
    /// Utterances observed so far, including this round's.
    pub utterances: usize,
    pub accuracy: f64,
    pub l2: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

/// Per-round scores of one model over all games, in game then round order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub name: String,
    pub scores: Vec<RoundScore>,
}

impl ModelRun {
    pub fn accuracies(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.accuracy).collect()
    }

    pub fn l2s(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.l2).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Skip {
    Never,
    /// Skip rounds where the base listener's top option is not optimal
    /// under the true reward.
    ListenerWrong,
}

struct Lane {
    spec: ModelSpec,
    skip: Skip,
}

fn score(
    game: &GameRecord,
    round: usize,
    posterior: &RewardPosterior,
    sets: &HeldOutSets,
    skipped: bool,
) -> RoundScore {
    let est = posterior.mean();
    RoundScore {
        game_id: game.game_id.clone(),
        round,
        utterances: round + 1,
        accuracy: sets.accuracy(&est, &game.theta),
        l2: l2_distance(&est, game.theta.weights()),
        skipped,
    }
}

fn listener_correct(engine: &Pragmatics, theta: &RewardVector, round: &crate::game::ObservedRound) -> bool {
    let p = engine.listener().option_probs(&round.utterance, &round.options);
    argmax(&p) == optimal_option(theta, &round.options).index
}

/// Held-out sets for a game: shared by every round and model.
pub fn game_sets(cfg: &EvalConfig, game_id: &str) -> HeldOutSets {
    HeldOutSets::sample(cfg.n_sets, &mut Rng::new(derive_seed(cfg.seed ^ SETS_STREAM, hash_str(game_id))))
}

fn run_lanes(
    games: &[GameRecord],
    engine: &Pragmatics,
    cfg: &EvalConfig,
    lanes: &[Lane],
) -> Result<Vec<ModelRun>, EvalError> {
    cfg.validate()?;
    if games.is_empty() {
        return Err(EvalError::NoGames);
    }
    let mut runs: Vec<ModelRun> = lanes
        .iter()
        .map(|l| ModelRun {
            name: l.spec.name.clone(),
            scores: Vec::new(),
        })
        .collect();
    for game in games {
        let sets = game_sets(cfg, &game.game_id);
        let mut posteriors = vec![RewardPosterior::uniform(); lanes.len()];
        let mut rngs: Vec<Rng> = (0..lanes.len())
            .map(|_| Rng::new(derive_seed(cfg.seed ^ UPDATE_STREAM, hash_str(&game.game_id))))
            .collect();
        for (r, obs) in game.rounds.iter().enumerate() {
            let terms = engine.round_terms(&obs.utterance, &obs.options, cfg.beta);
            let needs_check = lanes.iter().any(|l| l.skip == Skip::ListenerWrong);
            let listener_ok = !needs_check || listener_correct(engine, &game.theta, obs);
            for (i, lane) in lanes.iter().enumerate() {
                let skipped = lane.skip == Skip::ListenerWrong && !listener_ok;
                if !skipped {
                    posteriors[i] =
                        update_with_terms(&posteriors[i], &terms, lane.spec.likelihood, cfg.inference, &mut rngs[i])?
                            .posterior;
                }
                runs[i].scores.push(score(game, r, &posteriors[i], &sets, skipped));
            }
        }
    }
    Ok(runs)
}

/// Pointwise best of several runs over the same rounds, judged by held-out
/// accuracy; the L2 is that of the chosen run.
pub fn switch_runs(name: &str, runs: &[&ModelRun]) -> ModelRun {
    let mut out = ModelRun {
        name: name.to_string(),
        scores: Vec::new(),
    };
    if let Some(first) = runs.first() {
        for j in 0..first.scores.len() {
            let mut best = &first.scores[j];
            for run in &runs[1..] {
                if run.scores[j].accuracy > best.accuracy {
                    best = &run.scores[j];
                }
            }
            out.scores.push(RoundScore {
                skipped: false,
                ..best.clone()
            });
        }
    }
    out
}

fn compare(a: &ModelRun, b: &ModelRun, cfg: &EvalConfig) -> Result<Comparison, EvalError> {
    let (xa, xb) = (a.accuracies(), b.accuracies());
    let mut rng = Rng::new(derive_seed(cfg.seed, hash_str(&format!("{}|{}", a.name, b.name))));
    let p_value = paired_bootstrap(&xa, &xb, cfg.bootstrap_resamples, &mut rng)?;
    let diff = xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / xa.len().max(1) as f64;
    Ok(Comparison {
        a: a.name.clone(),
        b: b.name.clone(),
        mean_difference: diff,
        p_value,
    })
}

fn build_report(
    games: &[GameRecord],
    cfg: &EvalConfig,
    runs: &[ModelRun],
    pairs: &[(&str, &str)],
) -> Result<EvalReport, EvalError> {
    let find = |name: &str| runs.iter().find(|r| r.name == name);
    let mut comparisons = Vec::new();
    for (a, b) in pairs {
        if let (Some(ra), Some(rb)) = (find(a), find(b)) {
            comparisons.push(compare(ra, rb, cfg)?);
        }
    }
    Ok(EvalReport {
        meta: RunMeta {
            seed: cfg.seed,
            n_games: games.len(),
            n_rounds: games.iter().map(|g| g.rounds.len()).sum(),
            n_sets: cfg.n_sets,
            alpha: cfg.alpha,
            beta: cfg.beta,
            inference: cfg.inference,
            bootstrap_resamples: cfg.bootstrap_resamples,
            config_hash: cfg.hash(),
        },
        models: runs.iter().map(ModelSummary::from_run).collect(),
        comparisons,
        oracle_k: Vec::new(),
    })
}

fn plain(specs: Vec<ModelSpec>) -> Vec<Lane> {
    specs.into_iter().map(|spec| Lane { spec, skip: Skip::Never }).collect()
}

/// Runs each model over every game, scoring the posterior after each
/// observed prefix. The first model is compared against the others.
pub fn run_models(
    games: &[GameRecord],
    engine: &Pragmatics,
    cfg: &EvalConfig,
    specs: &[ModelSpec],
) -> Result<EvalReport, EvalError> {
    let runs = run_lanes(games, engine, cfg, &plain(specs.to_vec()))?;
    let pairs: Vec<(&str, &str)> = specs
        .iter()
        .skip(1)
        .map(|s| (specs[0].name.as_str(), s.name.as_str()))
        .collect();
    build_report(games, cfg, &runs, &pairs)
}

/// Runs the candidate models and adds their per-round best as
/// `oracle_switch`.
pub fn oracle_switch(
    games: &[GameRecord],
    engine: &Pragmatics,
    cfg: &EvalConfig,
    candidates: &[ModelSpec],
) -> Result<EvalReport, EvalError> {
    let mut runs = run_lanes(games, engine, cfg, &plain(candidates.to_vec()))?;
    let refs: Vec<&ModelRun> = runs.iter().collect();
    let switched = switch_runs(ORACLE_SWITCH, &refs);
    runs.push(switched);
    let pairs: Vec<(&str, &str)> = candidates.iter().map(|s| (ORACLE_SWITCH, s.name.as_str())).collect();
    build_report(games, cfg, &runs, &pairs)
}

/// The full model next to a copy of it that skips rounds the base listener
/// gets wrong.
pub fn known_action_ablation(games: &[GameRecord], engine: &Pragmatics, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let full = ModelSpec::full(cfg.alpha);
    let lanes = vec![
        Lane {
            spec: full.clone(),
            skip: Skip::Never,
        },
        Lane {
            spec: ModelSpec { name: KNOWN_ACTION.into(), ..full },
            skip: Skip::ListenerWrong,
        },
    ];
    let runs = run_lanes(games, engine, cfg, &lanes)?;
    build_report(games, cfg, &runs, &[(KNOWN_ACTION, FULL)])
}

/// Everything in one pass: the full model, both ablations, the oracle
/// switch between the ablations and the known-action run.
pub fn evaluate(games: &[GameRecord], engine: &Pragmatics, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let mut lanes = plain(cfg.models());
    lanes.push(Lane {
        spec: ModelSpec {
            name: KNOWN_ACTION.into(),
            ..ModelSpec::full(cfg.alpha)
        },
        skip: Skip::ListenerWrong,
    });
    let mut runs = run_lanes(games, engine, cfg, &lanes)?;
    let switched = switch_runs(ORACLE_SWITCH, &[&runs[1], &runs[2]]);
    runs.insert(3, switched);
    build_report(
        games,
        cfg,
        &runs,
        &[
            (FULL, ACTION_ONLY),
            (FULL, REWARD_ONLY),
            (ORACLE_SWITCH, FULL),
            (KNOWN_ACTION, FULL),
        ],
    )
}
