use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::pragmatics::{Beta, Inference};

use super::metrics::{MeanSe, OraclePoint};
use super::run::{ModelRun, RoundScore};

/// Utterance counts from this value up share one curve bin.
pub const LAST_BIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub n_games: usize,
    pub n_rounds: usize,
    pub n_sets: usize,
    pub alpha: f64,
    pub beta: Beta,
    pub inference: Inference,
    pub bootstrap_resamples: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// "1" .. "4", then "5+".
    pub bin: String,
    pub utterances: usize,
    pub accuracy: MeanSe,
    pub l2: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub accuracy: MeanSe,
    pub l2: MeanSe,
    pub skipped_rounds: usize,
    pub curve: Vec<CurvePoint>,
    pub scores: Vec<RoundScore>,
}

impl ModelSummary {
    pub fn from_run(run: &ModelRun) -> Self {
        Self {
            name: run.name.clone(),
            accuracy: MeanSe::of(&run.accuracies()),
            l2: MeanSe::of(&run.l2s()),
            skipped_rounds: run.scores.iter().filter(|s| s.skipped).count(),
            curve: curve(&run.scores),
            scores: run.scores.clone(),
        }
    }
}

pub fn bin_of(utterances: usize) -> usize {
    utterances.clamp(1, LAST_BIN)
}

fn curve(scores: &[RoundScore]) -> Vec<CurvePoint> {
    (1..=LAST_BIN)
        .filter_map(|b| {
            let in_bin: Vec<&RoundScore> = scores.iter().filter(|s| bin_of(s.utterances) == b).collect();
            if in_bin.is_empty() {
                return None;
            }
            let acc: Vec<f64> = in_bin.iter().map(|s| s.accuracy).collect();
            let l2: Vec<f64> = in_bin.iter().map(|s| s.l2).collect();
            Some(CurvePoint {
                bin: if b == LAST_BIN { format!("{b}+") } else { b.to_string() },
                utterances: b,
                accuracy: MeanSe::of(&acc),
                l2: MeanSe::of(&l2),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Mean of a − b over paired rounds.
    pub mean_difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub models: Vec<ModelSummary>,
    pub comparisons: Vec<Comparison>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle_k: Vec<OraclePoint>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary: one row per model, then oracle-k rows and the
    /// significance tests.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} games, {} rounds, {} held-out sets, alpha {}, beta {}, config {}",
            self.meta.n_games, self.meta.n_rounds, self.meta.n_sets, self.meta.alpha, self.meta.beta, self.meta.config_hash
        );
        let _ = writeln!(out, "{:<16} {:>18} {:>16}", "model", "held-out acc (%)", "reward L2");
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<16} {:>11.1} ± {:<4.1} {:>9.3} ± {:.3}",
                m.name,
                100.0 * m.accuracy.mean,
                100.0 * m.accuracy.se,
                m.l2.mean,
                m.l2.se
            );
        }
        for p in &self.oracle_k {
            let _ = writeln!(
                out,
                "{:<16} {:>11.1} ± {:<4.1}",
                format!("oracle k={}", p.k),
                100.0 * p.accuracy.mean,
                100.0 * p.accuracy.se
            );
        }
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{} vs {}: {:+.2} points, paired bootstrap p = {:.4}",
                c.a,
                c.b,
                100.0 * c.mean_difference,
                c.p_value
            );
        }
        out
    }

    /// Per-bin curves, one CSV row per (bin, model).
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("round_index,model,accuracy,l2,stderr\n");
        for m in &self.models {
            for p in &m.curve {
                let _ = writeln!(out, "{},{},{},{},{}", p.bin, m.name, p.accuracy.mean, p.l2.mean, p.accuracy.se);
            }
        }
        out
    }
}
