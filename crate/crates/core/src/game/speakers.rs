//! Simulated users that produce utterances for a hidden reward.

use serde::{Deserialize, Serialize};

use crate::domain::{optimal_option, OptionSet, RewardVector, NUM_OPTIONS};
use crate::lang::{literal_scores, Clause, Degree, FeatureRef, Grammar, Polarity, SemanticForm, Utterance, TOKEN_LIMIT};
use crate::pragmatics::{Beta, Pragmatics};
use crate::rng::Rng;

use super::GameError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SyntheticSpeaker {
    /// Samples from the pragmatic speaker distribution over the support.
    S1Sampler { alpha: f64, beta: Beta },
    /// Names the largest-magnitude reward weight with a single clause.
    Scripted,
    /// Rule-based user for corpus generation: mixes true statements about
    /// the reward with statements that single out the best option.
    Heuristic {
        reward_mode_prob: f64,
        two_clause_prob: f64,
    },
}

impl SyntheticSpeaker {
    pub fn heuristic() -> Self {
        SyntheticSpeaker::Heuristic {
            reward_mode_prob: 0.5,
            two_clause_prob: 0.35,
        }
    }

    pub fn needs_models(&self) -> bool {
        matches!(self, SyntheticSpeaker::S1Sampler { .. })
    }
}

/// Draws one utterance from `speaker` for the hidden reward `theta` in the
/// context `options`.
pub fn synthetic_utterance(
    speaker: &SyntheticSpeaker,
    grammar: &Grammar,
    engine: Option<&Pragmatics>,
    theta: &RewardVector,
    options: &OptionSet,
    rng: &mut Rng,
) -> Result<Utterance, GameError> {
    match *speaker {
        SyntheticSpeaker::S1Sampler { alpha, beta } => {
            let engine = engine.ok_or(GameError::ModelsRequired)?;
            let dist = engine.s1_distribution(theta, options, alpha, beta);
            let i = rng.categorical(&dist).ok_or(GameError::EmptyDistribution)?;
            Ok(engine.support().as_slice()[i].clone())
        }
        SyntheticSpeaker::Scripted => Ok(scripted(grammar, theta, options)),
        SyntheticSpeaker::Heuristic {
            reward_mode_prob,
            two_clause_prob,
        } => Ok(heuristic(grammar, theta, options, reward_mode_prob, two_clause_prob, rng)),
    }
}

/// The clause that states `theta`'s weight on one feature.
pub fn describing_clause(target: FeatureRef, weight: f64) -> Option<Clause> {
    if weight == 0.0 {
        return None;
    }
    let polarity = if weight.signum() * target.desirable_sign() > 0.0 {
        Polarity::Pos
    } else {
        Polarity::Neg
    };
    let degree = if weight.abs() >= 1.0 { Degree::Strong } else { Degree::Weak };
    Some(Clause::new(polarity, target, degree))
}

fn scripted(grammar: &Grammar, theta: &RewardVector, options: &OptionSet) -> Utterance {
    let w = theta.weights();
    let mut best = 0;
    for i in 1..w.len() {
        if w[i].abs() > w[best].abs() {
            best = i;
        }
    }
    let target = FeatureRef::from_index(best).expect("feature index");
    let clause = describing_clause(target, w[best]).unwrap_or_else(|| {
        let xi = optimal_option(theta, options).index;
        Clause::new(
            Polarity::Pos,
            FeatureRef::Carrier(options.flights()[xi].carrier),
            Degree::Weak,
        )
    });
    Utterance::new(grammar.surfaces(&clause)[0].as_str())
}

/// True when the literal reading of `form` picks `xi` and nothing else.
fn singles_out(form: &SemanticForm, options: &OptionSet, xi: usize) -> bool {
    let s = literal_scores(form, options);
    (0..NUM_OPTIONS).all(|k| k == xi || s[xi] > s[k] + 1e-9)
}

fn pick_weighted<T: Clone>(items: &[(T, f64)], rng: &mut Rng) -> Option<T> {
    let weights: Vec<f64> = items.iter().map(|(_, w)| *w).collect();
    rng.categorical(&weights).map(|i| items[i].0.clone())
}

fn realize_short(grammar: &Grammar, clauses: Vec<Clause>, rng: &mut Rng) -> Utterance {
    let form = SemanticForm::new(clauses);
    let mut last = None;
    for _ in 0..16 {
        let u = grammar.realize(&form, rng).expect("forms come from the grammar");
        if u.len() < TOKEN_LIMIT {
            return u;
        }
        last = Some(u);
    }
    last.expect("at least one realization")
}

fn heuristic(
    grammar: &Grammar,
    theta: &RewardVector,
    options: &OptionSet,
    reward_mode_prob: f64,
    two_clause_prob: f64,
    rng: &mut Rng,
) -> Utterance {
    let xi = optimal_option(theta, options).index;
    let w = theta.weights();
    let clauses: Vec<Clause> = grammar.clauses().copied().collect();
    if rng.bernoulli(reward_mode_prob) {
        let agreeing: Vec<Clause> = clauses.iter().copied().filter(|c| c.agrees_with(theta)).collect();
        let singles: Vec<(Vec<Clause>, f64)> = agreeing
            .iter()
            .filter(|c| singles_out(&SemanticForm::new(vec![**c]), options, xi))
            .map(|c| (vec![*c], w[c.target.index()].abs()))
            .collect();
        let mut pairs: Vec<(Vec<Clause>, f64)> = Vec::new();
        for (i, a) in agreeing.iter().enumerate() {
            for b in &agreeing[i + 1..] {
                if a.target == b.target {
                    continue;
                }
                let form = SemanticForm::new(vec![*a, *b]);
                if singles_out(&form, options, xi) {
                    pairs.push((vec![*a, *b], w[a.target.index()].abs() + w[b.target.index()].abs()));
                }
            }
        }
        let want_pair = rng.bernoulli(two_clause_prob);
        let chosen = if want_pair && !pairs.is_empty() || singles.is_empty() {
            pick_weighted(&pairs, rng)
        } else {
            pick_weighted(&singles, rng)
        };
        if let Some(mut form) = chosen {
            rng.shuffle(&mut form);
            return realize_short(grammar, form, rng);
        }
    }
    let identifying: Vec<(Vec<Clause>, f64)> = clauses
        .iter()
        .filter(|c| singles_out(&SemanticForm::new(vec![**c]), options, xi))
        .map(|c| {
            let weight = match (c.degree, c.target) {
                (Degree::Superlative, _) => 2.0,
                (_, FeatureRef::Carrier(_)) => 1.5,
                _ => 1.0,
            };
            (vec![*c], weight)
        })
        .collect();
    let form = pick_weighted(&identifying, rng).unwrap_or_else(|| {
        vec![Clause::new(
            Polarity::Pos,
            FeatureRef::Carrier(options.flights()[xi].carrier),
            Degree::Weak,
        )]
    });
    realize_short(grammar, form, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sample_option_set, sample_reward};

    #[test]
    fn scripted_single_weight() {
        let g = Grammar::default_v1();
        let mut rng = Rng::new(4);
        let options = sample_option_set(&mut rng);
        let theta = RewardVector::new([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let u = synthetic_utterance(&SyntheticSpeaker::Scripted, &g, None, &theta, &options, &mut rng).unwrap();
        let form = g.parse(&u);
        assert_eq!(
            form.clauses,
            vec![Clause::new(Polarity::Pos, FeatureRef::Carrier(crate::Carrier::JetBlue), Degree::Strong)]
        );
        let cheap = RewardVector::new([0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0]).unwrap();
        let u = synthetic_utterance(&SyntheticSpeaker::Scripted, &g, None, &cheap, &options, &mut rng).unwrap();
        assert_eq!(g.parse(&u).clauses, vec![Clause::new(Polarity::Pos, FeatureRef::Price, Degree::Weak)]);
    }

    #[test]
    fn heuristic_utterances_parse_and_mostly_single_out() {
        let g = Grammar::default_v1();
        let mut rng = Rng::new(5);
        let mut hits = 0;
        let n = 300;
        for _ in 0..n {
            let theta = sample_reward(&mut rng);
            let options = sample_option_set(&mut rng);
            let u = synthetic_utterance(&SyntheticSpeaker::heuristic(), &g, None, &theta, &options, &mut rng).unwrap();
            let form = g.parse(&u);
            assert!(!form.oov, "{u}");
            if singles_out(&form, &options, optimal_option(&theta, &options).index) {
                hits += 1;
            }
        }
        assert!(hits as f64 / n as f64 > 0.9, "{hits}/{n}");
    }

    #[test]
    fn s1_sampler_needs_models() {
        let g = Grammar::default_v1();
        let mut rng = Rng::new(6);
        let options = sample_option_set(&mut rng);
        let speaker = SyntheticSpeaker::S1Sampler {
            alpha: 0.5,
            beta: Beta::Infinite,
        };
        let err = synthetic_utterance(&speaker, &g, None, &RewardVector::zero(), &options, &mut rng);
        assert!(matches!(err, Err(GameError::ModelsRequired)));
    }
}
