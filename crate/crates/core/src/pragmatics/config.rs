use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::InferenceError;

/// Speaker rationality about which option to refer to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    /// Argmax: uniform over the optimal tie set.
    Infinite,
}

impl Beta {
    pub fn is_valid(self) -> bool {
        match self {
            Beta::Finite(b) => b >= 0.0 && b.is_finite(),
            Beta::Infinite => true,
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Beta {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(Beta::Infinite),
            other => {
                let b: f64 = other.parse().map_err(|_| format!("invalid beta `{s}`"))?;
                let beta = if b.is_infinite() && b > 0.0 { Beta::Infinite } else { Beta::Finite(b) };
                if beta.is_valid() {
                    Ok(beta)
                } else {
                    Err(format!("beta must be >= 0, got `{s}`"))
                }
            }
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(b) if b >= 0.0 && b.is_finite() => Ok(Beta::Finite(b)),
            Repr::Num(b) => Err(serde::de::Error::custom(format!("beta must be >= 0, got {b}"))),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Resample from the current posterior (self-normalized weights).
    #[default]
    Prior,
    /// Uniform over the grid, weighted by prior times likelihood. Needs a
    /// prior defined on grid points.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Inference {
    Exact,
    Importance {
        n_samples: usize,
        #[serde(default)]
        proposal: Proposal,
    },
}

/// Which speaker likelihood an update uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    Mixture { alpha: f64 },
    ActionOnly,
    RewardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PragmaticsConfig {
    pub alpha: f64,
    pub beta: Beta,
    pub inference: Inference,
}

impl Default for PragmaticsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: Beta::Infinite,
            inference: Inference::Exact,
        }
    }
}

impl PragmaticsConfig {
    pub fn new(alpha: f64, beta: Beta, inference: Inference) -> Result<Self, InferenceError> {
        let cfg = Self { alpha, beta, inference };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exact(alpha: f64, beta: Beta) -> Self {
        Self {
            alpha,
            beta,
            inference: Inference::Exact,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(InferenceError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.beta.is_valid() {
            return Err(InferenceError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if let Inference::Importance { n_samples: 0, .. } = self.inference {
            return Err(InferenceError::Config("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn likelihood(&self) -> Likelihood {
        Likelihood::Mixture { alpha: self.alpha }
    }
}
