#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use flightpref::game::{generate_corpus, DatagenConfig};
use flightpref::models::{train_bundle, TrainConfig};
use flightpref::pragmatics::Pragmatics;
use flightpref::Grammar;
use flightpref_cli::engine_from_bundle;

pub struct Fixture {
    _dir: tempfile::TempDir,
    pub models: PathBuf,
    pub engine: Arc<Pragmatics>,
    pub grammar: Arc<Grammar>,
}

/// A model bundle trained once per test binary and saved to a temp dir.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
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
        let dir = tempfile::tempdir().unwrap();
        let models = dir.path().join("models.json");
        bundle.save(&models).unwrap();
        Fixture {
            engine: engine_from_bundle(&bundle).unwrap(),
            _dir: dir,
            models,
            grammar,
        }
    })
}
