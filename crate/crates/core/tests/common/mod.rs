#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use flightpref::game::{generate_corpus, DatagenConfig};
use flightpref::models::{train_bundle, ModelBundle, TrainConfig};
use flightpref::pragmatics::Pragmatics;
use flightpref::{Corpus, Grammar};

pub struct Trained {
    pub grammar: Arc<Grammar>,
    pub corpus: Corpus,
    pub bundle: ModelBundle,
    pub engine: Arc<Pragmatics>,
}

/// Models trained once per test binary on a rule-based synthetic corpus.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let grammar = Arc::new(Grammar::default_v1());
        let corpus = generate_corpus(
            &DatagenConfig {
                n_games: 300,
                ..Default::default()
            },
            &grammar,
            None,
        )
        .unwrap();
        let (bundle, _) = train_bundle(&corpus, grammar.clone(), &TrainConfig::default(), 1).unwrap();
        let engine = Pragmatics::from_bundle(&bundle, grammar.enumerate_utterances(2).unwrap()).unwrap();
        Trained {
            grammar,
            corpus,
            bundle,
            engine: Arc::new(engine),
        }
    })
}
