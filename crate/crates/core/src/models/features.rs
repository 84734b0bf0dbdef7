use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::lang::{Grammar, Utterance, NUM_CLAUSES};

/// Sorted, deduplicated indices of active binary features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Encoding(pub Vec<u32>);

impl Encoding {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }
}

/// Sparse utterance encoder: a bias, one indicator per parsed clause, and one
/// indicator per vocabulary token. Tokens outside the vocabulary share an UNK
/// slot.
#[derive(Debug, Clone)]
pub struct Featurizer {
    grammar: Arc<Grammar>,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

const BIAS: u32 = 0;
const CLAUSE_OFFSET: u32 = 1;
const TOKEN_OFFSET: u32 = CLAUSE_OFFSET + NUM_CLAUSES as u32;

impl Featurizer {
    pub fn new(grammar: Arc<Grammar>, vocab: impl IntoIterator<Item = String>) -> Self {
        let vocab: Vec<String> = vocab
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), TOKEN_OFFSET + i as u32))
            .collect();
        Self {
            grammar,
            vocab,
            index,
        }
    }

    /// Vocabulary of every token in `utterances`.
    pub fn build<'a>(grammar: Arc<Grammar>, utterances: impl IntoIterator<Item = &'a Utterance>) -> Self {
        let vocab: BTreeSet<String> = utterances
            .into_iter()
            .flat_map(|u| u.tokens().iter().cloned())
            .collect();
        Featurizer::new(grammar, vocab)
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        TOKEN_OFFSET as usize + self.vocab.len() + 1
    }

    pub fn unk_index(&self) -> usize {
        TOKEN_OFFSET as usize + self.vocab.len()
    }

    pub fn encode(&self, u: &Utterance) -> Encoding {
        let mut idx = vec![BIAS];
        let form = self.grammar.parse(u);
        idx.extend(form.clauses.iter().map(|c| CLAUSE_OFFSET + c.id() as u32));
        let unk = self.unk_index() as u32;
        idx.extend(
            u.tokens()
                .iter()
                .map(|t| self.index.get(t).copied().unwrap_or(unk)),
        );
        idx.sort_unstable();
        idx.dedup();
        Encoding(idx)
    }
}
