use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::form::{Clause, Degree, FeatureRef, Polarity, SemanticForm};
use crate::domain::Carrier;
use crate::rng::Rng;

/// Joins the clauses of a multi-clause utterance.
pub const CONNECTOR: &str = "and";
/// Enumerated utterances have strictly fewer whitespace tokens than this.
pub const TOKEN_LIMIT: usize = 8;
pub const MAX_CLAUSES: usize = 2;
const CARRIER_SLOT: &str = "{carrier}";

static DEFAULT_GRAMMAR: &str = include_str!("../../grammar/v1.tsv");

#[derive(Debug, Error)]
pub enum LangError {
    #[error("grammar line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("cannot realize an empty semantic form")]
    EmptyForm,
    #[error("no template realizes clause {0}")]
    NoTemplate(Clause),
    #[error("form repeats target {0}")]
    RepeatedTarget(FeatureRef),
    #[error("max_clauses must be between 1 and {MAX_CLAUSES}, got {0}")]
    ClauseCount(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A whitespace-tokenized, lowercased utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Utterance {
    raw: String,
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = raw
            .split_whitespace()
            .map(|t| t.to_lowercase())
            .collect();
        Self { raw, tokens }
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        Utterance::new(
            tokens
                .iter()
                .map(|t| t.as_ref())
                .collect::<Vec<_>>()
                .join(" "),
        )
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens joined by single spaces.
    pub fn normalized(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_digit(&self) -> bool {
        self.raw.chars().any(|c| c.is_ascii_digit())
    }
}

impl From<String> for Utterance {
    fn from(s: String) -> Self {
        Utterance::new(s)
    }
}

impl From<&str> for Utterance {
    fn from(s: &str) -> Self {
        Utterance::new(s)
    }
}

impl From<Utterance> for String {
    fn from(u: Utterance) -> String {
        u.raw
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Deduplicated utterances in lexicographic order of their normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Utterance>", into = "Vec<Utterance>")]
pub struct UtteranceSet {
    utterances: Vec<Utterance>,
}

impl From<Vec<Utterance>> for UtteranceSet {
    fn from(v: Vec<Utterance>) -> Self {
        UtteranceSet::new(v)
    }
}

impl From<UtteranceSet> for Vec<Utterance> {
    fn from(s: UtteranceSet) -> Self {
        s.utterances
    }
}

impl UtteranceSet {
    pub fn new(items: impl IntoIterator<Item = Utterance>) -> Self {
        let unique: BTreeMap<String, Utterance> = items
            .into_iter()
            .map(|u| (u.normalized(), Utterance::new(u.normalized())))
            .collect();
        Self {
            utterances: unique.into_values().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }

    pub fn as_slice(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn position(&self, u: &Utterance) -> Option<usize> {
        let key = u.normalized();
        self.utterances
            .binary_search_by(|x| x.normalized().cmp(&key))
            .ok()
    }

    pub fn contains(&self, u: &Utterance) -> bool {
        self.position(u).is_some()
    }
}

impl<'a> IntoIterator for &'a UtteranceSet {
    type Item = &'a Utterance;
    type IntoIter = std::slice::Iter<'a, Utterance>;

    fn into_iter(self) -> Self::IntoIter {
        self.utterances.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TargetPattern {
    AnyCarrier,
    Fixed(FeatureRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    polarity: Polarity,
    target: TargetPattern,
    degree: Degree,
    surface: String,
}

/// The template grammar with its expanded surface table.
#[derive(Debug, Clone)]
pub struct Grammar {
    version: String,
    source: String,
    templates: Vec<Template>,
    surfaces: BTreeMap<Clause, Vec<String>>,
    lookup: HashMap<String, Clause>,
}

/// JSONL row of a grammar corpus dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusLine {
    pub tokens: Vec<String>,
    pub form: SemanticForm,
}

impl Grammar {
    /// The built-in `v1` grammar.
    pub fn default_v1() -> Grammar {
        Grammar::from_text(DEFAULT_GRAMMAR).expect("built-in grammar is valid")
    }

    pub fn from_path(path: &Path) -> Result<Grammar, LangError> {
        Grammar::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn from_text(text: &str) -> Result<Grammar, LangError> {
        let mut version = None;
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| LangError::Grammar {
                line: line_no,
                message,
            };
            let trimmed = line.trim_end();
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (lhs, rhs) = trimmed
                .split_once('\t')
                .ok_or_else(|| err("expected <form> TAB <surface>".into()))?;
            if lhs == "version" {
                version = Some(rhs.trim().to_string());
                continue;
            }
            let parts: Vec<&str> = lhs.split_whitespace().collect();
            let [pol, target, degree] = parts[..] else {
                return Err(err(format!("form pattern `{lhs}` needs 3 fields")));
            };
            let polarity = match pol {
                "+" => Polarity::Pos,
                "-" => Polarity::Neg,
                other => return Err(err(format!("bad polarity `{other}`"))),
            };
            let target = if target == CARRIER_SLOT {
                TargetPattern::AnyCarrier
            } else {
                match FeatureRef::from_name(target) {
                    Some(f) => TargetPattern::Fixed(f),
                    None => return Err(err(format!("unknown target `{target}`"))),
                }
            };
            let degree =
                Degree::from_name(degree).ok_or_else(|| err(format!("bad degree `{degree}`")))?;
            let surface = rhs.split_whitespace().collect::<Vec<_>>().join(" ");
            if surface.is_empty() {
                return Err(err("empty surface".into()));
            }
            let has_slot = surface.contains(CARRIER_SLOT);
            if has_slot != (target == TargetPattern::AnyCarrier) {
                return Err(err("{carrier} slot must appear exactly for carrier targets".into()));
            }
            if surface.split(' ').any(|t| t == CONNECTOR) {
                return Err(err(format!("surface may not contain `{CONNECTOR}`")));
            }
            if surface.chars().any(|c| c.is_ascii_digit()) {
                return Err(err("surface may not contain digits".into()));
            }
            templates.push(Template {
                polarity,
                target,
                degree,
                surface,
            });
        }
        let version = version.ok_or(LangError::Grammar {
            line: 0,
            message: "missing `version` line".into(),
        })?;
        let mut surfaces: BTreeMap<Clause, Vec<String>> = BTreeMap::new();
        let mut lookup = HashMap::new();
        for t in &templates {
            let expansions: Vec<(FeatureRef, String)> = match t.target {
                TargetPattern::Fixed(f) => vec![(f, t.surface.clone())],
                TargetPattern::AnyCarrier => Carrier::ALL
                    .iter()
                    .map(|c| (FeatureRef::Carrier(*c), t.surface.replace(CARRIER_SLOT, c.word())))
                    .collect(),
            };
            for (target, surface) in expansions {
                let clause = Clause::new(t.polarity, target, t.degree);
                if let Some(prev) = lookup.insert(surface.clone(), clause) {
                    return Err(LangError::Grammar {
                        line: 0,
                        message: format!("surface `{surface}` is ambiguous between {prev} and {clause}"),
                    });
                }
                surfaces.entry(clause).or_default().push(surface);
            }
        }
        Ok(Grammar {
            version,
            source: text.to_string(),
            templates,
            surfaces,
            lookup,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// The template file this grammar was built from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn num_templates(&self) -> usize {
        self.templates.len()
    }

    /// All surfaces realizing `clause`, in template order.
    pub fn surfaces(&self, clause: &Clause) -> &[String] {
        self.surfaces.get(clause).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Clauses with at least one realization.
    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.surfaces.keys()
    }

    /// Total function: anything outside the grammar yields an empty form
    /// flagged OOV.
    pub fn parse(&self, u: &Utterance) -> SemanticForm {
        if u.is_empty() {
            return SemanticForm::out_of_vocabulary();
        }
        let mut clauses = Vec::new();
        for segment in u.tokens().split(|t| t == CONNECTOR) {
            if segment.is_empty() {
                return SemanticForm::out_of_vocabulary();
            }
            match self.lookup.get(&segment.join(" ")) {
                Some(c) => clauses.push(*c),
                None => return SemanticForm::out_of_vocabulary(),
            }
        }
        let form = SemanticForm::new(clauses);
        if form.has_distinct_targets() {
            form
        } else {
            SemanticForm::out_of_vocabulary()
        }
    }

    /// Picks one surface per clause uniformly at random.
    pub fn realize(&self, form: &SemanticForm, rng: &mut Rng) -> Result<Utterance, LangError> {
        if form.clauses.is_empty() {
            return Err(LangError::EmptyForm);
        }
        let mut seen = BTreeSet::new();
        let mut parts = Vec::with_capacity(form.clauses.len());
        for clause in &form.clauses {
            if !seen.insert(clause.target) {
                return Err(LangError::RepeatedTarget(clause.target));
            }
            let options = self.surfaces(clause);
            if options.is_empty() {
                return Err(LangError::NoTemplate(*clause));
            }
            parts.push(options[rng.index(options.len())].as_str());
        }
        Ok(Utterance::new(parts.join(&format!(" {CONNECTOR} "))))
    }

    /// Every grammar string with at most `max_clauses` clauses and fewer than
    /// [`TOKEN_LIMIT`] tokens.
    pub fn enumerate_utterances(&self, max_clauses: usize) -> Result<UtteranceSet, LangError> {
        if !(1..=MAX_CLAUSES).contains(&max_clauses) {
            return Err(LangError::ClauseCount(max_clauses));
        }
        let singles: Vec<(FeatureRef, &String)> = self
            .surfaces
            .iter()
            .flat_map(|(c, ss)| ss.iter().map(move |s| (c.target, s)))
            .collect();
        let token_count = |s: &str| s.split(' ').count();
        let mut out: Vec<Utterance> = singles
            .iter()
            .filter(|(_, s)| token_count(s) < TOKEN_LIMIT)
            .map(|(_, s)| Utterance::new(s.as_str()))
            .collect();
        if max_clauses == 2 {
            for (t1, s1) in &singles {
                for (t2, s2) in &singles {
                    if t1 == t2 || token_count(s1) + token_count(s2) + 1 >= TOKEN_LIMIT {
                        continue;
                    }
                    out.push(Utterance::new(format!("{s1} {CONNECTOR} {s2}")));
                }
            }
        }
        out.retain(|u| !u.has_digit());
        Ok(UtteranceSet::new(out))
    }

    /// Writes `{"tokens": [...], "form": {...}}` per utterance.
    pub fn write_corpus<W: Write>(&self, set: &UtteranceSet, mut w: W) -> Result<(), LangError> {
        for u in set {
            let line = CorpusLine {
                tokens: u.tokens().to_vec(),
                form: self.parse(u),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::default_v1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Grammar {
        Grammar::default_v1()
    }

    #[test]
    fn parses_reference_examples() {
        let g = g();
        let jb = g.parse(&"the jetblue flight".into());
        assert_eq!(
            jb.clauses,
            vec![Clause::new(Polarity::Pos, FeatureRef::Carrier(Carrier::JetBlue), Degree::Weak)]
        );
        assert!(!jb.clauses[0].is_superlative());

        let cheap = g.parse(&"cheapest one please".into());
        assert_eq!(
            cheap.clauses,
            vec![Clause::new(Polarity::Pos, FeatureRef::Price, Degree::Superlative)]
        );
        assert_eq!(cheap.clauses[0].reward_sign(), -1.0);

        let but = g.parse(&"anything but american".into());
        assert_eq!(
            but.clauses,
            vec![Clause::new(Polarity::Neg, FeatureRef::Carrier(Carrier::American), Degree::Strong)]
        );
    }

    #[test]
    fn out_of_grammar_is_flagged_not_failed() {
        let g = g();
        for raw in ["i like the flight that is $64", "", "and", "delta and", "delta and not delta"] {
            let f = g.parse(&raw.into());
            assert!(f.oov && f.clauses.is_empty(), "{raw:?}");
        }
    }

    #[test]
    fn delta_realizations() {
        let g = g();
        let form = SemanticForm::new(vec![Clause::new(
            Polarity::Pos,
            FeatureRef::Carrier(Carrier::Delta),
            Degree::Weak,
        )]);
        let allowed = ["delta", "the delta flight", "i like delta"];
        let mut rng = Rng::new(0);
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            let u = g.realize(&form, &mut rng).unwrap();
            assert!(allowed.contains(&u.raw()), "{u}");
            seen.insert(u.raw().to_string());
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn realize_is_seed_deterministic() {
        let g = g();
        let form = SemanticForm::new(vec![
            Clause::new(Polarity::Neg, FeatureRef::Stops, Degree::Superlative),
            Clause::new(Polarity::Pos, FeatureRef::Carrier(Carrier::Delta), Degree::Strong),
        ]);
        let a = g.realize(&form, &mut Rng::new(11)).unwrap();
        let b = g.realize(&form, &mut Rng::new(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(g.parse(&a), form);
    }

    #[test]
    fn realize_errors() {
        let g = g();
        assert!(matches!(
            g.realize(&SemanticForm::default(), &mut Rng::new(0)),
            Err(LangError::EmptyForm)
        ));
        let dup = SemanticForm::new(vec![
            Clause::new(Polarity::Pos, FeatureRef::Price, Degree::Weak),
            Clause::new(Polarity::Neg, FeatureRef::Price, Degree::Weak),
        ]);
        assert!(matches!(
            g.realize(&dup, &mut Rng::new(0)),
            Err(LangError::RepeatedTarget(FeatureRef::Price))
        ));
    }

    #[test]
    fn coverage_of_every_clause() {
        let g = g();
        for c in Clause::all() {
            assert!(!g.surfaces(&c).is_empty(), "no surface for {c}");
        }
    }

    #[test]
    fn grammar_file_errors() {
        assert!(Grammar::from_text("+ price weak\tcheap\n").is_err());
        assert!(Grammar::from_text("version\tv1\n+ price weak\tcheap and cheerful\n").is_err());
        assert!(Grammar::from_text("version\tv1\n+ price weak\tcheap\n- price weak\tcheap\n").is_err());
        assert!(Grammar::from_text("version\tv1\n+ price weak\t{carrier}\n").is_err());
        assert!(Grammar::from_text("version\tv1\n+ price weak\tunder 100\n").is_err());
        let ok = Grammar::from_text("version\tv9\n+ price weak\tcheap\n").unwrap();
        assert_eq!(ok.version(), "v9");
    }

    #[test]
    fn enumerate_rejects_bad_clause_counts() {
        assert!(g().enumerate_utterances(0).is_err());
        assert!(g().enumerate_utterances(3).is_err());
    }

    #[test]
    fn utterance_set_dedups_and_sorts() {
        let s = UtteranceSet::new(vec!["b".into(), "a".into(), "b".into(), "a  ".into()]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.as_slice()[0].raw(), "a");
        assert_eq!(s.position(&"b".into()), Some(1));
        assert_eq!(s.position(&"c".into()), None);
    }
}
