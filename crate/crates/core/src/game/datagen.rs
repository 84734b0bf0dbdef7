//! Synthetic games and corpora.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusRow};
use crate::domain::{sample_reward, OptionSet, RewardVector};
use crate::lang::{Grammar, Utterance};
use crate::pragmatics::Pragmatics;
use crate::rng::{derive_seed, Rng};

use super::speakers::{synthetic_utterance, SyntheticSpeaker};
use super::state::{round_options, ROUNDS_PER_GAME};
use super::GameError;

/// One observed round: the options shown and what the user said.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRound {
    pub options: OptionSet,
    pub utterance: Utterance,
}

/// A game as seen by evaluation: the hidden reward and the rounds in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub theta: RewardVector,
    pub rounds: Vec<ObservedRound>,
}

impl GameRecord {
    pub fn to_rows(&self) -> Vec<CorpusRow> {
        self.rounds
            .iter()
            .enumerate()
            .map(|(r, obs)| {
                CorpusRow::new(
                    self.game_id.clone(),
                    r as u32,
                    self.theta,
                    obs.options.clone(),
                    obs.utterance.clone(),
                )
            })
            .collect()
    }
}

/// Groups corpus rows into games. Rows of one game are expected to share a
/// reward; the first row's reward is used.
pub fn games_from_corpus(corpus: &Corpus) -> Vec<GameRecord> {
    corpus
        .games()
        .into_iter()
        .map(|(game_id, rows)| GameRecord {
            game_id,
            theta: rows[0].theta,
            rounds: rows
                .iter()
                .map(|r| ObservedRound {
                    options: r.options.clone(),
                    utterance: r.utterance.clone(),
                })
                .collect(),
        })
        .collect()
}

pub fn games_to_corpus(games: &[GameRecord]) -> Corpus {
    Corpus::new(games.iter().flat_map(GameRecord::to_rows).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub n_games: usize,
    pub rounds: usize,
    pub speaker: SyntheticSpeaker,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            n_games: 200,
            rounds: ROUNDS_PER_GAME,
            speaker: SyntheticSpeaker::heuristic(),
            seed: 0,
            id_prefix: "g".into(),
        }
    }
}

/// Reward of the game with this seed, as drawn by datagen and new sessions.
pub fn game_reward(game_seed: u64) -> RewardVector {
    sample_reward(&mut Rng::new(derive_seed(game_seed, 0x7e7a)))
}

/// Generates `cfg.n_games` games with one synthetic utterance per round.
/// Round options match those of a live game with the same seed.
pub fn generate_games(
    cfg: &DatagenConfig,
    grammar: &Grammar,
    engine: Option<&Pragmatics>,
) -> Result<Vec<GameRecord>, GameError> {
    if cfg.speaker.needs_models() && engine.is_none() {
        return Err(GameError::ModelsRequired);
    }
    (0..cfg.n_games)
        .map(|g| {
            let game_seed = derive_seed(cfg.seed, g as u64);
            let theta = game_reward(game_seed);
            let mut rng = Rng::new(derive_seed(game_seed, 0x5eed));
            let rounds = (0..cfg.rounds)
                .map(|r| {
                    let options = round_options(game_seed, r);
                    let utterance = synthetic_utterance(&cfg.speaker, grammar, engine, &theta, &options, &mut rng)?;
                    Ok(ObservedRound { options, utterance })
                })
                .collect::<Result<Vec<_>, GameError>>()?;
            Ok(GameRecord {
                game_id: format!("{}{g:05}", cfg.id_prefix),
                theta,
                rounds,
            })
        })
        .collect()
}

pub fn generate_corpus(cfg: &DatagenConfig, grammar: &Grammar, engine: Option<&Pragmatics>) -> Result<Corpus, GameError> {
    Ok(games_to_corpus(&generate_games(cfg, grammar, engine)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip_and_determinism() {
        let g = Grammar::default_v1();
        let cfg = DatagenConfig {
            n_games: 5,
            ..Default::default()
        };
        let a = generate_corpus(&cfg, &g, None).unwrap();
        let b = generate_corpus(&cfg, &g, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5 * ROUNDS_PER_GAME);
        let games = games_from_corpus(&a);
        assert_eq!(games_to_corpus(&games), a);
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let back = Corpus::read(&buf[..]).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.corpus, a);
    }
}
