//! The 5^8 reward grid, split into a carrier half and a scalar half so that
//! additive quantities over the grid factor into two 625-entry tables.

use std::sync::Arc;

use crate::domain::{FeatureVec, OptionSet, GRID_SIZE, GRID_VALUES, NUM_FEATURES, NUM_OPTIONS};
use crate::lang::{Utterance, UtteranceSet};
use crate::models::speaker::REWARD_INPUT;
use crate::models::{ModelError, SpeakerParams};

use super::InferenceError;

pub const HALF: usize = 625;
const HALF_DIMS: usize = NUM_FEATURES / 2;

/// Grid digits of a half index, most significant first.
pub fn half_theta(h: usize) -> [f64; HALF_DIMS] {
    let mut out = [0.0; HALF_DIMS];
    let mut rest = h;
    for slot in out.iter_mut().rev() {
        *slot = GRID_VALUES[rest % 5];
        rest /= 5;
    }
    out
}

pub fn split(idx: usize) -> (usize, usize) {
    (idx / HALF, idx % HALF)
}

pub fn theta_at(idx: usize) -> FeatureVec {
    let (hi, lo) = split(idx);
    let mut out = [0.0; NUM_FEATURES];
    out[..HALF_DIMS].copy_from_slice(&half_theta(hi));
    out[HALF_DIMS..].copy_from_slice(&half_theta(lo));
    out
}

/// `sum_j theta_j * x_j` over one half, for every half index.
pub fn half_table(x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), HALF_DIMS);
    (0..HALF)
        .map(|h| half_theta(h).iter().zip(x).map(|(t, v)| t * v).sum())
        .collect()
}

/// Per-option reward tables for one context: `r_k(idx) = hi[k][hi] + lo[k][lo]`.
#[derive(Debug, Clone)]
pub struct RewardTables {
    hi: [Vec<f64>; NUM_OPTIONS],
    lo: [Vec<f64>; NUM_OPTIONS],
}

impl RewardTables {
    pub fn new(options: &OptionSet) -> Self {
        let phis = options.features();
        Self {
            hi: std::array::from_fn(|k| half_table(&phis[k][..HALF_DIMS])),
            lo: std::array::from_fn(|k| half_table(&phis[k][HALF_DIMS..])),
        }
    }

    #[inline]
    pub fn rewards(&self, idx: usize) -> [f64; NUM_OPTIONS] {
        let (hi, lo) = split(idx);
        std::array::from_fn(|k| self.hi[k][hi] + self.lo[k][lo])
    }
}

/// One reward-speaker member with its log-normalizer cached over the grid.
#[derive(Debug)]
struct Member {
    /// Logit coefficients per support utterance, temperature applied.
    coefs: Vec<[f64; REWARD_INPUT]>,
    params: SpeakerParams,
    log_z: Vec<f64>,
}

/// Base reward speaker (or a probability-averaging ensemble of them)
/// normalized over a fixed utterance support, evaluable on the whole grid.
#[derive(Debug, Clone)]
pub struct GridSpeaker {
    members: Arc<Vec<Member>>,
    support: Arc<UtteranceSet>,
}

/// The speaker's factors for one utterance: `logit(idx) = a[hi] + b[lo]`.
#[derive(Debug, Clone)]
pub struct UtteranceFactors {
    parts: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GridSpeaker {
    pub fn new(members: Vec<SpeakerParams>, support: Arc<UtteranceSet>) -> Result<Self, InferenceError> {
        if support.is_empty() {
            return Err(ModelError::EmptySupport.into());
        }
        if members.is_empty() {
            return Err(ModelError::EmptyEnsemble.into());
        }
        let members = members.into_iter().map(|p| build_member(p, &support)).collect();
        Ok(Self {
            members: Arc::new(members),
            support,
        })
    }

    pub fn support(&self) -> &Arc<UtteranceSet> {
        &self.support
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    fn coefs_for(member: &Member, u: &Utterance, support: &UtteranceSet) -> [f64; REWARD_INPUT] {
        match support.position(u) {
            Some(i) => member.coefs[i],
            None => scaled_coefs(&member.params, u),
        }
    }

    pub fn factors(&self, u: &Utterance) -> UtteranceFactors {
        let parts = self
            .members
            .iter()
            .map(|m| {
                let c = Self::coefs_for(m, u, &self.support);
                let mut a = half_table(&c[..HALF_DIMS]);
                for x in &mut a {
                    *x += c[NUM_FEATURES];
                }
                (a, half_table(&c[HALF_DIMS..NUM_FEATURES]))
            })
            .collect();
        UtteranceFactors { parts }
    }

    /// `p_reward(u | theta_idx)`, averaged over members.
    #[inline]
    pub fn prob_at(&self, f: &UtteranceFactors, idx: usize) -> f64 {
        let (hi, lo) = split(idx);
        if f.parts.len() == 1 {
            let (a, b) = &f.parts[0];
            return (a[hi] + b[lo] - self.members[0].log_z[idx]).exp();
        }
        let total: f64 = f
            .parts
            .iter()
            .zip(self.members.iter())
            .map(|((a, b), m)| (a[hi] + b[lo] - m.log_z[idx]).exp())
            .sum();
        total / f.parts.len() as f64
    }

    /// `p_reward(u | theta)` for an arbitrary grid vector.
    pub fn prob(&self, u: &Utterance, theta_idx: usize) -> f64 {
        self.prob_at(&self.factors(u), theta_idx)
    }

    /// Full distribution over the support for one grid point.
    pub fn distribution(&self, theta_idx: usize) -> Vec<f64> {
        let psi = psi(&theta_at(theta_idx));
        let mut out = vec![0.0; self.support.len()];
        for m in self.members.iter() {
            let lz = m.log_z[theta_idx];
            for (o, c) in out.iter_mut().zip(&m.coefs) {
                *o += (dot9(c, &psi) - lz).exp();
            }
        }
        let k = self.members.len() as f64;
        for o in &mut out {
            *o /= k;
        }
        out
    }

    pub fn log_normalizer(&self, member: usize, theta_idx: usize) -> f64 {
        self.members[member].log_z[theta_idx]
    }
}

fn psi(theta: &FeatureVec) -> [f64; REWARD_INPUT] {
    let mut x = [1.0; REWARD_INPUT];
    x[..NUM_FEATURES].copy_from_slice(theta);
    x
}

fn dot9(a: &[f64; REWARD_INPUT], b: &[f64; REWARD_INPUT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled_coefs(params: &SpeakerParams, u: &Utterance) -> [f64; REWARD_INPUT] {
    let c = params.coefficients(&params.featurizer().encode(u));
    c.map(|x| x / params.tau())
}

fn build_member(params: SpeakerParams, support: &UtteranceSet) -> Member {
    let coefs: Vec<[f64; REWARD_INPUT]> = support.iter().map(|u| scaled_coefs(&params, u)).collect();
    let n = coefs.len();
    // log a_u[hi] and log b_u[lo]
    let la: Vec<Vec<f64>> = coefs
        .iter()
        .map(|c| {
            half_table(&c[..HALF_DIMS])
                .into_iter()
                .map(|x| x + c[NUM_FEATURES])
                .collect()
        })
        .collect();
    let lb: Vec<Vec<f64>> = coefs.iter().map(|c| half_table(&c[HALF_DIMS..NUM_FEATURES])).collect();
    let max_of = |v: &Vec<f64>| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peaks: Vec<(f64, f64)> = la.iter().zip(&lb).map(|(a, b)| (max_of(a), max_of(b))).collect();
    let shift = peaks.iter().map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
    // Z(hi, lo) = sum_u A_u[hi] B_u[lo], with every term scaled by exp(-shift)
    let mut z = vec![0.0; GRID_SIZE];
    let mut a_scaled = vec![0.0; n * HALF];
    let mut b_scaled = vec![0.0; n * HALF];
    for u in 0..n {
        let (pa, pb) = peaks[u];
        let carry = pa + pb - shift;
        for h in 0..HALF {
            a_scaled[u * HALF + h] = (la[u][h] - pa + carry).exp();
            b_scaled[u * HALF + h] = (lb[u][h] - pb).exp();
        }
    }
    for hi in 0..HALF {
        let row = &mut z[hi * HALF..(hi + 1) * HALF];
        for u in 0..n {
            let a = a_scaled[u * HALF + hi];
            if a == 0.0 {
                continue;
            }
            for (r, b) in row.iter_mut().zip(&b_scaled[u * HALF..(u + 1) * HALF]) {
                *r += a * b;
            }
        }
    }
    let log_z = z
        .iter()
        .enumerate()
        .map(|(idx, &zi)| {
            if zi > 1e-280 && zi.is_finite() {
                zi.ln() + shift
            } else {
                let (hi, lo) = split(idx);
                let logits: Vec<f64> = (0..n).map(|u| la[u][hi] + lb[u][lo]).collect();
                crate::math::log_sum_exp(&logits)
            }
        })
        .collect();
    Member { coefs, params, log_z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RewardVector;

    #[test]
    fn theta_at_matches_grid_index() {
        for idx in [0, 1, 624, 625, 200_000, GRID_SIZE - 1] {
            let theta = RewardVector::from_grid_index(idx).unwrap();
            assert_eq!(theta.weights(), &theta_at(idx));
            assert_eq!(theta.grid_index(), idx);
        }
    }
}
