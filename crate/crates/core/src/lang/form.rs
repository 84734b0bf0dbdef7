use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Carrier, OptionSet, RewardVector, NUM_OPTIONS};

/// Minimum |weight| for a weak or superlative clause to agree with a reward.
pub const WEAK_THRESHOLD: f64 = 0.5;
/// Minimum |weight| for a strong clause to agree with a reward.
pub const STRONG_THRESHOLD: f64 = 1.0;

/// One of the eight reward features a clause can talk about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FeatureRef {
    Carrier(Carrier),
    Price,
    Stops,
    LongestStop,
    ArrivalSlack,
}

impl FeatureRef {
    pub const ALL: [FeatureRef; 8] = [
        FeatureRef::Carrier(Carrier::American),
        FeatureRef::Carrier(Carrier::Delta),
        FeatureRef::Carrier(Carrier::JetBlue),
        FeatureRef::Carrier(Carrier::Southwest),
        FeatureRef::Price,
        FeatureRef::Stops,
        FeatureRef::LongestStop,
        FeatureRef::ArrivalSlack,
    ];

    /// Position in the flight feature vector.
    pub fn index(self) -> usize {
        match self {
            FeatureRef::Carrier(c) => c.index(),
            FeatureRef::Price => 4,
            FeatureRef::Stops => 5,
            FeatureRef::LongestStop => 6,
            FeatureRef::ArrivalSlack => 7,
        }
    }

    pub fn from_index(i: usize) -> Option<FeatureRef> {
        FeatureRef::ALL.get(i).copied()
    }

    /// Sign of the reward weight that a positive clause expresses. Price,
    /// stops and layover length are costs; carriers and arrival slack are
    /// benefits.
    pub fn desirable_sign(self) -> f64 {
        match self {
            FeatureRef::Carrier(_) | FeatureRef::ArrivalSlack => 1.0,
            FeatureRef::Price | FeatureRef::Stops | FeatureRef::LongestStop => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureRef::Carrier(c) => c.word(),
            FeatureRef::Price => "price",
            FeatureRef::Stops => "stops",
            FeatureRef::LongestStop => "longest_stop",
            FeatureRef::ArrivalSlack => "arrival_slack",
        }
    }

    pub fn from_name(s: &str) -> Option<FeatureRef> {
        FeatureRef::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<FeatureRef> for String {
    fn from(f: FeatureRef) -> String {
        f.name().to_string()
    }
}

impl TryFrom<String> for FeatureRef {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        FeatureRef::from_name(&s).ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];

    pub fn sign(self) -> f64 {
        match self {
            Polarity::Pos => 1.0,
            Polarity::Neg => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Pos => "+",
            Polarity::Neg => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    Weak,
    Strong,
    #[serde(rename = "sup")]
    Superlative,
}

impl Degree {
    pub const ALL: [Degree; 3] = [Degree::Weak, Degree::Strong, Degree::Superlative];

    pub fn name(self) -> &'static str {
        match self {
            Degree::Weak => "weak",
            Degree::Strong => "strong",
            Degree::Superlative => "sup",
        }
    }

    pub fn from_name(s: &str) -> Option<Degree> {
        Degree::ALL.into_iter().find(|d| d.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clause {
    pub polarity: Polarity,
    pub target: FeatureRef,
    pub degree: Degree,
}

/// Number of distinct clauses (8 targets x 2 polarities x 3 degrees).
pub const NUM_CLAUSES: usize = 48;

impl Clause {
    pub fn new(polarity: Polarity, target: FeatureRef, degree: Degree) -> Self {
        Self {
            polarity,
            target,
            degree,
        }
    }

    pub fn is_superlative(&self) -> bool {
        self.degree == Degree::Superlative
    }

    /// Sign of the reward weight this clause asserts.
    pub fn reward_sign(&self) -> f64 {
        self.polarity.sign() * self.target.desirable_sign()
    }

    /// Dense id in `0..NUM_CLAUSES`.
    pub fn id(&self) -> usize {
        let p = match self.polarity {
            Polarity::Pos => 0,
            Polarity::Neg => 1,
        };
        let d = match self.degree {
            Degree::Weak => 0,
            Degree::Strong => 1,
            Degree::Superlative => 2,
        };
        self.target.index() * 6 + p * 3 + d
    }

    pub fn all() -> impl Iterator<Item = Clause> {
        FeatureRef::ALL.into_iter().flat_map(|t| {
            Polarity::ALL
                .into_iter()
                .flat_map(move |p| Degree::ALL.into_iter().map(move |d| Clause::new(p, t, d)))
        })
    }

    /// Whether the clause is a true statement about `theta`.
    pub fn agrees_with(&self, theta: &RewardVector) -> bool {
        let w = theta.weights()[self.target.index()];
        let needed = match self.degree {
            Degree::Strong => STRONG_THRESHOLD,
            Degree::Weak | Degree::Superlative => WEAK_THRESHOLD,
        };
        w * self.reward_sign() >= needed
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.polarity.symbol(), self.target, self.degree.name())
    }
}

/// Parsed meaning of an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SemanticForm {
    pub clauses: Vec<Clause>,
    /// Set when the utterance is outside the grammar.
    #[serde(default)]
    pub oov: bool,
}

impl SemanticForm {
    pub fn new(clauses: Vec<Clause>) -> Self {
        Self {
            clauses,
            oov: false,
        }
    }

    pub fn out_of_vocabulary() -> Self {
        Self {
            clauses: Vec::new(),
            oov: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// True when no two clauses share a target.
    pub fn has_distinct_targets(&self) -> bool {
        let mut seen = [false; 8];
        for c in &self.clauses {
            let i = c.target.index();
            if seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }
}

/// Fraction of clauses that agree with `theta`; zero for an empty form.
pub fn clause_reward_consistency(form: &SemanticForm, theta: &RewardVector) -> f64 {
    if form.clauses.is_empty() {
        return 0.0;
    }
    let agreeing = form.clauses.iter().filter(|c| c.agrees_with(theta)).count();
    agreeing as f64 / form.clauses.len() as f64
}

/// Literal reading of a form in a context: each clause adds its reward sign
/// times the option's value on the clause target.
pub fn literal_scores(form: &SemanticForm, options: &OptionSet) -> [f64; NUM_OPTIONS] {
    let phis = options.features();
    std::array::from_fn(|k| {
        form.clauses
            .iter()
            .map(|c| c.reward_sign() * phis[k][c.target.index()])
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_with(i: usize, w: f64) -> RewardVector {
        let mut v = [0.0; 8];
        v[i] = w;
        RewardVector::new(v).unwrap()
    }

    #[test]
    fn clause_ids_are_dense() {
        let mut ids: Vec<usize> = Clause::all().map(|c| c.id()).collect();
        ids.sort();
        assert_eq!(ids, (0..NUM_CLAUSES).collect::<Vec<_>>());
    }

    #[test]
    fn consistency_examples() {
        let jb = FeatureRef::Carrier(Carrier::JetBlue);
        let form = SemanticForm::new(vec![Clause::new(Polarity::Pos, jb, Degree::Strong)]);
        assert_eq!(clause_reward_consistency(&form, &theta_with(2, 1.0)), 1.0);
        assert_eq!(clause_reward_consistency(&form, &theta_with(2, -1.0)), 0.0);
        assert_eq!(clause_reward_consistency(&form, &theta_with(2, 0.5)), 0.0);

        let mixed = SemanticForm::new(vec![
            Clause::new(Polarity::Pos, jb, Degree::Strong),
            Clause::new(Polarity::Pos, FeatureRef::Price, Degree::Weak),
        ]);
        // JetBlue +1 agrees; price weight 0 does not.
        assert_eq!(clause_reward_consistency(&mixed, &theta_with(2, 1.0)), 0.5);
        assert_eq!(clause_reward_consistency(&SemanticForm::default(), &theta_with(2, 1.0)), 0.0);
    }

    #[test]
    fn cost_features_flip_sign() {
        let cheap = Clause::new(Polarity::Pos, FeatureRef::Price, Degree::Superlative);
        assert_eq!(cheap.reward_sign(), -1.0);
        assert!(cheap.agrees_with(&theta_with(4, -0.5)));
        assert!(!cheap.agrees_with(&theta_with(4, 0.5)));
    }

    #[test]
    fn form_json_shape() {
        let form = SemanticForm::new(vec![Clause::new(
            Polarity::Neg,
            FeatureRef::Carrier(Carrier::American),
            Degree::Strong,
        )]);
        let json = serde_json::to_string(&form).unwrap();
        assert_eq!(
            json,
            r#"{"clauses":[{"polarity":"-","target":"american","degree":"strong"}],"oov":false}"#
        );
        assert_eq!(serde_json::from_str::<SemanticForm>(&json).unwrap(), form);
    }
}
