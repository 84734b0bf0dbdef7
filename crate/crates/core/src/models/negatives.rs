use crate::domain::Carrier;
use crate::lang::Utterance;
use crate::rng::Rng;

pub const MAX_HARD_NEGATIVES: usize = 4;

const STOP_COUNTS: [&str; 3] = ["zero", "one", "two"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Carrier,
    StopCount,
}

impl Category {
    fn words(self) -> Vec<&'static str> {
        match self {
            Category::Carrier => Carrier::ALL.iter().map(|c| c.word()).collect(),
            Category::StopCount => STOP_COUNTS.to_vec(),
        }
    }
}

/// Token positions that mention an attribute by exact word match: carrier
/// names anywhere, and a count word directly followed by `stop`/`stops`.
pub fn attribute_mentions(u: &Utterance) -> Vec<usize> {
    mentions(u).into_iter().map(|(i, _)| i).collect()
}

fn mentions(u: &Utterance) -> Vec<(usize, Category)> {
    let tokens = u.tokens();
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if Carrier::from_word(t).is_some() {
            out.push((i, Category::Carrier));
        } else if STOP_COUNTS.contains(&t.as_str())
            && matches!(tokens.get(i + 1).map(String::as_str), Some("stop" | "stops"))
        {
            out.push((i, Category::StopCount));
        }
    }
    out
}

/// Up to `k` (at most four) copies of `u`, each with one attribute word
/// swapped for a different word of the same category. Words of that
/// category already present in `u` are never used as distractors.
pub fn hard_negatives(u: &Utterance, k: usize, rng: &mut Rng) -> Vec<Utterance> {
    let k = k.min(MAX_HARD_NEGATIVES);
    let tokens = u.tokens();
    let mut candidates: Vec<(usize, &'static str)> = Vec::new();
    for (pos, cat) in mentions(u) {
        for word in cat.words() {
            if !tokens.iter().any(|t| t == word) {
                candidates.push((pos, word));
            }
        }
    }
    rng.choose_distinct(candidates.len(), k)
        .into_iter()
        .map(|c| {
            let (pos, word) = candidates[c];
            let mut swapped = tokens.to_vec();
            swapped[pos] = word.to_string();
            Utterance::from_tokens(&swapped)
        })
        .collect()
}
