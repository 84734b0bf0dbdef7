//! Rounds, scoring and the assistant's choose-or-ask decision.

use serde::{Deserialize, Serialize};

use crate::domain::{optimal_option, sample_option_set, OptionSet, RewardVector, NUM_OPTIONS};
use crate::lang::{Grammar, Utterance};
use crate::math::argmax;
use crate::pragmatics::{
    option_optimality_prob, p_opt_rewards, Beta, PosteriorSnapshot, Pragmatics, PragmaticsConfig,
    RewardPosterior,
};
use crate::rng::{derive_seed, Rng};

use super::speakers::{synthetic_utterance, SyntheticSpeaker};
use super::GameError;

pub const ROUNDS_PER_GAME: usize = 6;
pub const POINTS_CORRECT: i64 = 25;
pub const POINTS_INCORRECT: i64 = -100;
pub const POINTS_ASK: i64 = -20;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "index", rename_all = "snake_case")]
pub enum AssistantAction {
    Chose(usize),
    Asked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Incorrect,
    NotApplicable,
}

impl Outcome {
    pub fn points(self) -> i64 {
        match self {
            Outcome::Correct => POINTS_CORRECT,
            Outcome::Incorrect => POINTS_INCORRECT,
            Outcome::NotApplicable => POINTS_ASK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub options: OptionSet,
    pub utterances: Vec<Utterance>,
    pub assistant_action: Option<AssistantAction>,
    pub outcome: Option<Outcome>,
    pub points_delta: i64,
}

impl RoundRecord {
    fn new(options: OptionSet) -> Self {
        Self {
            options,
            utterances: Vec::new(),
            assistant_action: None,
            outcome: None,
            points_delta: 0,
        }
    }
}

/// Why the game is waiting for an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceReason {
    Initial,
    AfterAsk,
    AfterIncorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "reason", rename_all = "snake_case")]
pub enum Phase {
    AwaitingUtterance(UtteranceReason),
    AwaitingAssistant,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssistantPolicy {
    pub confidence_threshold: f64,
    pub cfg: PragmaticsConfig,
}

impl Default for AssistantPolicy {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_THRESHOLD,
            cfg: PragmaticsConfig::default(),
        }
    }
}

impl AssistantPolicy {
    pub fn new(confidence_threshold: f64, cfg: PragmaticsConfig) -> Result<Self, GameError> {
        if !(0.0..=1.0).contains(&confidence_threshold) {
            return Err(GameError::Policy(format!(
                "threshold must lie in [0, 1], got {confidence_threshold}"
            )));
        }
        cfg.validate().map_err(|e| GameError::Policy(e.to_string()))?;
        Ok(Self { confidence_threshold, cfg })
    }

    /// Chooses the most probable optimal option when its probability
    /// reaches the threshold. A threshold of 1 or more always asks.
    pub fn decide(&self, probs: &[f64; NUM_OPTIONS], forced: bool) -> AssistantAction {
        let best = argmax(probs);
        if forced || (self.confidence_threshold < 1.0 && probs[best] >= self.confidence_threshold) {
            AssistantAction::Chose(best)
        } else {
            AssistantAction::Asked
        }
    }
}

/// Serializable game record. The full posterior lives in [`Game`]; the
/// state carries its snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub game_id: String,
    pub theta_star: RewardVector,
    pub seed: u64,
    pub demonstration: bool,
    pub rounds: Vec<RoundRecord>,
    pub score: i64,
    pub round_index: usize,
    pub phase: Phase,
    pub updates: u64,
    pub degenerate_updates: u64,
    pub posterior: PosteriorSnapshot,
}

/// Result of one assistant turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub action: AssistantAction,
    pub outcome: Outcome,
    pub points_delta: i64,
    pub optimality: [f64; NUM_OPTIONS],
}

/// A live game: the serializable state plus the full posterior.
#[derive(Debug, Clone)]
pub struct Game {
    state: GameState,
    posterior: RewardPosterior,
}

/// Option set shown in round `round` of a game with this seed.
pub fn round_options(seed: u64, round: usize) -> OptionSet {
    sample_option_set(&mut Rng::new(derive_seed(seed, round as u64)))
}

impl Game {
    pub fn new(game_id: impl Into<String>, theta_star: RewardVector, seed: u64, demonstration: bool) -> Self {
        let posterior = RewardPosterior::uniform();
        let state = GameState {
            game_id: game_id.into(),
            theta_star,
            seed,
            demonstration,
            rounds: vec![RoundRecord::new(round_options(seed, 0))],
            score: 0,
            round_index: 0,
            phase: Phase::AwaitingUtterance(UtteranceReason::Initial),
            updates: 0,
            degenerate_updates: 0,
            posterior: posterior.snapshot(),
        };
        Self { state, posterior }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn posterior(&self) -> &RewardPosterior {
        &self.posterior
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == Phase::Finished
    }

    pub fn current_options(&self) -> &OptionSet {
        &self.state.rounds[self.state.round_index].options
    }

    /// Optimal option (lowest index) of the current round under the hidden
    /// reward.
    pub fn correct_option(&self) -> usize {
        optimal_option(&self.state.theta_star, self.current_options()).index
    }

    fn update_rng(&self) -> Rng {
        Rng::new(derive_seed(self.state.seed ^ 0x9e37_79b9, self.state.updates))
    }

    fn apply_posterior(&mut self, next: crate::pragmatics::Update) {
        self.state.updates += 1;
        if next.degenerate {
            self.state.degenerate_updates += 1;
        }
        self.posterior = next.posterior;
        self.state.posterior = self.posterior.snapshot();
    }

    /// Records a user utterance and updates the posterior on it.
    pub fn submit_utterance(
        &mut self,
        u: Utterance,
        engine: &Pragmatics,
        policy: &AssistantPolicy,
    ) -> Result<(), GameError> {
        let reason = match self.state.phase {
            Phase::AwaitingUtterance(r) => r,
            phase => return Err(GameError::WrongPhase { expected: "awaiting_utterance", phase }),
        };
        if u.is_empty() {
            return Err(GameError::EmptyUtterance);
        }
        let options = self.current_options().clone();
        let mut rng = self.update_rng();
        let next = engine.l2_update(&self.posterior, &u, &options, &policy.cfg, &mut rng)?;
        self.apply_posterior(next);
        self.state.rounds[self.state.round_index].utterances.push(u);
        match reason {
            UtteranceReason::Initial => self.state.phase = Phase::AwaitingAssistant,
            UtteranceReason::AfterAsk | UtteranceReason::AfterIncorrect => self.advance_round(),
        }
        Ok(())
    }

    /// The assistant acts on the current round. Round 0 always chooses.
    pub fn assistant_act(&mut self, policy: &AssistantPolicy) -> Result<ActionResult, GameError> {
        if self.state.phase != Phase::AwaitingAssistant {
            return Err(GameError::WrongPhase {
                expected: "awaiting_assistant",
                phase: self.state.phase,
            });
        }
        let options = self.current_options().clone();
        let optimality = option_optimality_prob(&self.posterior, &options);
        let forced = self.state.round_index == 0;
        let action = policy.decide(&optimality, forced);
        let correct = optimal_option(&self.state.theta_star, &options);
        let outcome = match action {
            AssistantAction::Chose(i) if correct.ties.contains(&i) => Outcome::Correct,
            AssistantAction::Chose(_) => Outcome::Incorrect,
            AssistantAction::Asked => Outcome::NotApplicable,
        };
        let points_delta = outcome.points();
        {
            let round = &mut self.state.rounds[self.state.round_index];
            round.assistant_action = Some(action);
            round.outcome = Some(outcome);
            round.points_delta = points_delta;
        }
        self.state.score += points_delta;
        match outcome {
            Outcome::Correct => self.advance_round(),
            Outcome::Incorrect => {
                if self.state.demonstration {
                    self.demonstrate(correct.index, &options, policy.cfg.beta);
                }
                self.state.phase = Phase::AwaitingUtterance(UtteranceReason::AfterIncorrect);
            }
            Outcome::NotApplicable => self.state.phase = Phase::AwaitingUtterance(UtteranceReason::AfterAsk),
        }
        Ok(ActionResult {
            action,
            outcome,
            points_delta,
            optimality,
        })
    }

    /// Treats the revealed correct option as an observed choice.
    fn demonstrate(&mut self, xi: usize, options: &OptionSet, beta: Beta) {
        let tables = crate::pragmatics::RewardTables::new(options);
        let weights: Vec<f64> = self
            .posterior
            .iter()
            .map(|(idx, w)| w * p_opt_rewards(&tables.rewards(idx), beta)[xi])
            .collect();
        let next = match self.posterior.reweighted(weights) {
            Some(posterior) => crate::pragmatics::Update {
                posterior,
                degenerate: false,
            },
            None => crate::pragmatics::Update {
                posterior: self.posterior.clone(),
                degenerate: true,
            },
        };
        self.apply_posterior(next);
    }

    fn advance_round(&mut self) {
        if self.state.round_index + 1 >= ROUNDS_PER_GAME {
            self.state.phase = Phase::Finished;
            return;
        }
        self.state.round_index += 1;
        let next = round_options(self.state.seed, self.state.round_index);
        self.state.rounds.push(RoundRecord::new(next));
        self.state.phase = Phase::AwaitingAssistant;
    }
}

/// Plays the current round to completion with a simulated user.
#[allow(clippy::too_many_arguments)]
pub fn step_round(
    game: &mut Game,
    policy: &AssistantPolicy,
    engine: &Pragmatics,
    speaker: &SyntheticSpeaker,
    grammar: &Grammar,
    speaker_engine: Option<&Pragmatics>,
    rng: &mut Rng,
) -> Result<(), GameError> {
    if game.is_finished() {
        return Err(GameError::WrongPhase {
            expected: "an unfinished game",
            phase: Phase::Finished,
        });
    }
    let start = game.state.round_index;
    while !game.is_finished() && game.state.round_index == start {
        match game.state.phase {
            Phase::AwaitingUtterance(_) => {
                let theta = game.state.theta_star;
                let options = game.current_options().clone();
                let u = synthetic_utterance(speaker, grammar, speaker_engine.or(Some(engine)), &theta, &options, rng)?;
                game.submit_utterance(u, engine, policy)?;
            }
            Phase::AwaitingAssistant => {
                game.assistant_act(policy)?;
            }
            Phase::Finished => break,
        }
    }
    Ok(())
}

/// Plays a full game.
#[allow(clippy::too_many_arguments)]
pub fn play_game(
    game_id: &str,
    theta: RewardVector,
    seed: u64,
    policy: &AssistantPolicy,
    engine: &Pragmatics,
    speaker: &SyntheticSpeaker,
    grammar: &Grammar,
    rng: &mut Rng,
) -> Result<Game, GameError> {
    let mut game = Game::new(game_id, theta, seed, false);
    while !game.is_finished() {
        step_round(&mut game, policy, engine, speaker, grammar, None, rng)?;
    }
    Ok(game)
}

/// Tally of a finished game's rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTally {
    pub correct: u32,
    pub incorrect: u32,
    pub asks: u32,
}

impl ScoreTally {
    pub fn of(state: &GameState) -> Self {
        let mut t = ScoreTally::default();
        for r in &state.rounds {
            match r.outcome {
                Some(Outcome::Correct) => t.correct += 1,
                Some(Outcome::Incorrect) => t.incorrect += 1,
                Some(Outcome::NotApplicable) => t.asks += 1,
                None => {}
            }
        }
        t
    }

    pub fn score(&self) -> i64 {
        POINTS_CORRECT * self.correct as i64 + POINTS_INCORRECT * self.incorrect as i64 + POINTS_ASK * self.asks as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rules() {
        let mut p = AssistantPolicy::default();
        assert_eq!(p.decide(&[0.85, 0.1, 0.05], false), AssistantAction::Chose(0));
        assert_eq!(p.decide(&[0.5, 0.3, 0.2], false), AssistantAction::Asked);
        assert_eq!(p.decide(&[0.5, 0.3, 0.2], true), AssistantAction::Chose(0));
        p.confidence_threshold = 1.0;
        assert_eq!(p.decide(&[1.0, 0.0, 0.0], false), AssistantAction::Asked);
    }

    #[test]
    fn phase_errors() {
        let mut g = Game::new("g", RewardVector::zero(), 1, false);
        assert!(matches!(g.assistant_act(&AssistantPolicy::default()), Err(GameError::WrongPhase { .. })));
        assert_eq!(g.state().phase, Phase::AwaitingUtterance(UtteranceReason::Initial));
    }

    #[test]
    fn inference_mode_is_recorded_in_snapshot() {
        let g = Game::new("g", RewardVector::zero(), 1, false);
        let snap = serde_json::to_value(&g.state().posterior).unwrap();
        assert_eq!(snap["mode"], "exact");
    }
}
