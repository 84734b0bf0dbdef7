use crate::domain::{OptionSet, NUM_OPTIONS};
use crate::lang::Utterance;

use super::{Listener, ModelError};

/// Arithmetic mean of member distributions. A single member is returned
/// unchanged; otherwise the mean is renormalized to absorb rounding.
pub fn average_distributions(members: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let first = members.first().ok_or(ModelError::EmptyEnsemble)?;
    if members.len() == 1 {
        return Ok(first.clone());
    }
    let mut out = vec![0.0; first.len()];
    for m in members {
        if m.len() != first.len() {
            return Err(ModelError::SupportMismatch {
                expected: first.len(),
                found: m.len(),
            });
        }
        for (o, p) in out.iter_mut().zip(m) {
            *o += p;
        }
    }
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Probability-averaging ensemble of listeners.
#[derive(Debug, Clone)]
pub struct Ensemble<L> {
    members: Vec<L>,
}

impl<L> Ensemble<L> {
    pub fn new(members: Vec<L>) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::EmptyEnsemble);
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[L] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl<L: Listener> Listener for Ensemble<L> {
    fn option_probs(&self, u: &Utterance, options: &OptionSet) -> [f64; NUM_OPTIONS] {
        if self.members.len() == 1 {
            return self.members[0].option_probs(u, options);
        }
        let dists: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.option_probs(u, options).to_vec())
            .collect();
        let avg = average_distributions(&dists).expect("members share the option set");
        [avg[0], avg[1], avg[2]]
    }
}
