//! On-disk model artifacts: one JSON document holding the grammar, the
//! vocabulary and every trained weight matrix with its shape.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{NUM_FEATURES, SCHEMA_VERSION};
use crate::lang::Grammar;

use super::features::Featurizer;
use super::listener::ListenerParams;
use super::speaker::{ActionSpeakerParams, SpeakerParams, ACTION_INPUT, REWARD_INPUT};
use super::{Ensemble, ModelError};

pub const BUNDLE_KIND: &str = "flightpref-models";

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub featurizer: Featurizer,
    pub listeners: Vec<ListenerParams>,
    pub speakers: Vec<SpeakerParams>,
    pub action_speaker: Option<ActionSpeakerParams>,
    pub mixture_logit: f64,
}

#[derive(Serialize, Deserialize)]
struct MatrixSet {
    shape: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    members: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawBundle {
    v: String,
    kind: String,
    grammar: String,
    vocab: Vec<String>,
    listener: MatrixSet,
    speaker: MatrixSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action_speaker: Option<MatrixSet>,
    mixture_logit: f64,
}

impl ModelBundle {
    pub fn listener(&self) -> Ensemble<ListenerParams> {
        Ensemble::new(self.listeners.clone()).expect("bundle has a listener")
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        self.featurizer.grammar()
    }

    pub fn to_json(&self) -> String {
        let dim = self.featurizer.dim();
        let raw = RawBundle {
            v: SCHEMA_VERSION.to_string(),
            kind: BUNDLE_KIND.to_string(),
            grammar: self.featurizer.grammar().source().to_string(),
            vocab: self.featurizer.vocab().to_vec(),
            listener: MatrixSet {
                shape: [dim, NUM_FEATURES],
                tau: None,
                members: self.listeners.iter().map(|l| l.weights().to_vec()).collect(),
            },
            speaker: MatrixSet {
                shape: [dim, REWARD_INPUT],
                tau: self.speakers.first().map(SpeakerParams::tau),
                members: self.speakers.iter().map(|s| s.weights().to_vec()).collect(),
            },
            action_speaker: self.action_speaker.as_ref().map(|a| MatrixSet {
                shape: [dim, ACTION_INPUT],
                tau: None,
                members: vec![a.weights().to_vec()],
            }),
            mixture_logit: self.mixture_logit,
        };
        serde_json::to_string(&raw).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: RawBundle = serde_json::from_str(text)?;
        let bad = |m: String| Err(ModelError::Bundle(m));
        if raw.v != SCHEMA_VERSION || raw.kind != BUNDLE_KIND {
            return bad(format!("unsupported bundle {}/{}", raw.kind, raw.v));
        }
        let grammar = Grammar::from_text(&raw.grammar).map_err(|e| ModelError::Bundle(e.to_string()))?;
        let featurizer = Featurizer::new(Arc::new(grammar), raw.vocab);
        let dim = featurizer.dim();
        let check = |set: &MatrixSet, cols: usize, name: &str| -> Result<(), ModelError> {
            if set.shape != [dim, cols] {
                return Err(ModelError::Bundle(format!(
                    "{name} shape {:?} does not match [{dim}, {cols}]",
                    set.shape
                )));
            }
            if set.members.is_empty() {
                return Err(ModelError::Bundle(format!("{name} has no members")));
            }
            for m in &set.members {
                if m.len() != dim * cols || m.iter().any(|x| !x.is_finite()) {
                    return Err(ModelError::Bundle(format!("{name} weights are malformed")));
                }
            }
            Ok(())
        };
        check(&raw.listener, NUM_FEATURES, "listener")?;
        check(&raw.speaker, REWARD_INPUT, "speaker")?;
        if let Some(a) = &raw.action_speaker {
            check(a, ACTION_INPUT, "action_speaker")?;
        }
        let tau = raw.speaker.tau.unwrap_or(super::DEFAULT_TAU);
        if !(tau > 0.0) {
            return bad(format!("tau must be positive, got {tau}"));
        }
        let listeners = raw
            .listener
            .members
            .into_iter()
            .map(|w| ListenerParams::from_weights(featurizer.clone(), w).expect("checked"))
            .collect();
        let speakers = raw
            .speaker
            .members
            .into_iter()
            .map(|w| SpeakerParams::from_weights(featurizer.clone(), w, tau).expect("checked"))
            .collect();
        let action_speaker = raw
            .action_speaker
            .and_then(|a| a.members.into_iter().next())
            .map(|w| ActionSpeakerParams::from_weights(featurizer.clone(), w).expect("checked"));
        Ok(Self {
            featurizer,
            listeners,
            speakers,
            action_speaker,
            mixture_logit: raw.mixture_logit,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
