//! Command line front end and HTTP game service.

pub mod cli;
pub mod commands;
pub mod http;
pub mod play;

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use flightpref::models::ModelBundle;
use flightpref::pragmatics::Pragmatics;
use flightpref::Grammar;

/// Loads a model bundle and builds the inference engine over its grammar's
/// two-clause utterance support.
pub fn load_engine(path: &Path) -> anyhow::Result<(Arc<Pragmatics>, Arc<Grammar>)> {
    let bundle = ModelBundle::load(path).with_context(|| format!("loading models from {}", path.display()))?;
    Ok((engine_from_bundle(&bundle)?, bundle.grammar().clone()))
}

pub fn engine_from_bundle(bundle: &ModelBundle) -> anyhow::Result<Arc<Pragmatics>> {
    let support = bundle.grammar().enumerate_utterances(2)?;
    Ok(Arc::new(Pragmatics::from_bundle(bundle, support)?))
}
