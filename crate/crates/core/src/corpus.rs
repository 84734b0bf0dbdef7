//! Round-level corpus: one JSONL row per observed utterance.
//!
//! Row schema (`v1`, keys in this order):
//! `{"v": "v1", "game_id", "round", "theta": [8], "options": [[8] x 3],
//!   "utterance": str, "xi_star": int}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{optimal_option, FeatureVec, OptionSet, RewardVector, NUM_OPTIONS, SCHEMA_VERSION};
use crate::lang::Utterance;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: schema version `{found}` is not supported (expected `{SCHEMA_VERSION}`)")]
    SchemaVersion { line: usize, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One observed utterance in one round of a game.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub game_id: String,
    pub round: u32,
    pub theta: RewardVector,
    pub options: OptionSet,
    pub utterance: Utterance,
    /// Optimal option under `theta`, lowest index among ties.
    pub xi_star: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<String>,
    game_id: String,
    round: u32,
    theta: [f64; 8],
    options: Vec<FeatureVec>,
    utterance: String,
    xi_star: i64,
}

impl CorpusRow {
    pub fn new(
        game_id: impl Into<String>,
        round: u32,
        theta: RewardVector,
        options: OptionSet,
        utterance: Utterance,
    ) -> Self {
        let xi_star = optimal_option(&theta, &options).index;
        Self {
            game_id: game_id.into(),
            round,
            theta,
            options,
            utterance,
            xi_star,
        }
    }

    fn to_raw(&self) -> RawRow {
        RawRow {
            v: Some(SCHEMA_VERSION.to_string()),
            game_id: self.game_id.clone(),
            round: self.round,
            theta: *self.theta.weights(),
            options: self.options.features().to_vec(),
            utterance: self.utterance.raw().to_string(),
            xi_star: self.xi_star as i64,
        }
    }

    fn from_raw(raw: RawRow) -> Result<Self, String> {
        let theta = RewardVector::new(raw.theta).map_err(|e| e.to_string())?;
        if raw.options.len() != NUM_OPTIONS {
            return Err(format!("expected {NUM_OPTIONS} options, got {}", raw.options.len()));
        }
        let options = OptionSet::from_feature_rows(&raw.options).map_err(|e| e.to_string())?;
        if !(0..NUM_OPTIONS as i64).contains(&raw.xi_star) {
            return Err(format!("xi_star={} out of range 0..{NUM_OPTIONS}", raw.xi_star));
        }
        let expected = optimal_option(&theta, &options).index;
        if raw.xi_star as usize != expected {
            return Err(format!(
                "xi_star={} but the optimal option under theta is {expected}",
                raw.xi_star
            ));
        }
        Ok(CorpusRow {
            game_id: raw.game_id,
            round: raw.round,
            theta,
            options,
            utterance: Utterance::new(raw.utterance),
            xi_star: expected,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("row serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub rows: Vec<CorpusRow>,
}

/// A row rejected during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub corpus: Corpus,
    pub rejected: Vec<RejectedRow>,
}

impl Corpus {
    pub fn new(rows: Vec<CorpusRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by game in first-appearance order, each game ordered by
    /// round (stable within a round).
    pub fn games(&self) -> Vec<(String, Vec<&CorpusRow>)> {
        let mut order: Vec<String> = Vec::new();
        let mut by_game: BTreeMap<&str, Vec<&CorpusRow>> = BTreeMap::new();
        for row in &self.rows {
            let entry = by_game.entry(row.game_id.as_str()).or_default();
            if entry.is_empty() {
                order.push(row.game_id.clone());
            }
            entry.push(row);
        }
        order
            .into_iter()
            .map(|id| {
                let mut rows = by_game.remove(id.as_str()).unwrap_or_default();
                rows.sort_by_key(|r| r.round);
                (id, rows)
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for row in &self.rows {
            w.write_all(row.to_json_line().as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Parses JSONL; invalid rows are reported with their 1-based line number
    /// and skipped. A row carrying a different schema version aborts.
    pub fn read<R: BufRead>(reader: R) -> Result<Ingested, CorpusError> {
        let mut out = Ingested::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRow = match serde_json::from_str(&line) {
                Ok(raw) => raw,
                Err(e) => {
                    out.rejected.push(RejectedRow {
                        line: line_no,
                        reason: format!("malformed row: {e}"),
                    });
                    continue;
                }
            };
            if let Some(v) = &raw.v {
                if v != SCHEMA_VERSION {
                    return Err(CorpusError::SchemaVersion {
                        line: line_no,
                        found: v.clone(),
                    });
                }
            }
            match CorpusRow::from_raw(raw) {
                Ok(row) => out.corpus.rows.push(row),
                Err(reason) => out.rejected.push(RejectedRow {
                    line: line_no,
                    reason,
                }),
            }
        }
        Ok(out)
    }
}

/// Loads and validates a corpus file.
pub fn ingest_corpus(path: &Path) -> Result<Ingested, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::read(BufReader::new(file))
}
