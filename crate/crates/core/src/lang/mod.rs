//! Controlled utterance language: a template grammar, a total parser,
//! a realizer and exhaustive enumeration of short utterances.

mod form;
mod grammar;

pub use form::{
    clause_reward_consistency, literal_scores, Clause, Degree, FeatureRef, Polarity, SemanticForm, NUM_CLAUSES,
    STRONG_THRESHOLD, WEAK_THRESHOLD,
};
pub use grammar::{
    CorpusLine, Grammar, LangError, Utterance, UtteranceSet, CONNECTOR, MAX_CLAUSES, TOKEN_LIMIT,
};
