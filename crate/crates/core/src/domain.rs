//! Flights, option sets, reward vectors and the linear reward.
//!
//! A flight is described by an 8-dimensional feature vector: a one-hot carrier
//! block (American, Delta, JetBlue, Southwest) followed by four scalars in
//! `[0, 1]` (price, number of stops, longest layover, time before the meeting).
//! Rewards are linear in those features with weights on a 5-point grid, so the
//! whole hypothesis space has `5^8 = 390_625` points, addressed by
//! [`RewardVector::grid_index`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

pub const NUM_FEATURES: usize = 8;
pub const NUM_OPTIONS: usize = 3;
pub const GRID_VALUES: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
pub const GRID_SIZE: usize = 390_625;
/// Rewards within this distance are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Schema tag written into every JSONL record.
pub const SCHEMA_VERSION: &str = "v1";

pub type FeatureVec = [f64; NUM_FEATURES];

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("weight {value} at feature {index} is not on the grid {{-1, -0.5, 0, 0.5, 1}}")]
    OffGrid { index: usize, value: f64 },
    #[error("grid index {0} out of range")]
    GridIndex(usize),
    #[error("feature vector is not a valid flight: {0}")]
    BadFlight(String),
    #[error("expected {NUM_OPTIONS} flights, got {0}")]
    OptionCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Carrier {
    American,
    Delta,
    JetBlue,
    Southwest,
}

impl Carrier {
    pub const ALL: [Carrier; 4] = [
        Carrier::American,
        Carrier::Delta,
        Carrier::JetBlue,
        Carrier::Southwest,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Carrier> {
        Carrier::ALL.get(i).copied()
    }

    /// Lowercase surface word.
    pub fn word(self) -> &'static str {
        match self {
            Carrier::American => "american",
            Carrier::Delta => "delta",
            Carrier::JetBlue => "jetblue",
            Carrier::Southwest => "southwest",
        }
    }

    pub fn from_word(w: &str) -> Option<Carrier> {
        Carrier::ALL.into_iter().find(|c| c.word() == w)
    }
}

impl fmt::Display for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    pub carrier: Carrier,
    pub price_norm: f64,
    /// 0, 0.5 or 1 for zero, one or two stops.
    pub stops_norm: f64,
    pub longest_stop_norm: f64,
    /// Time between arrival and the meeting.
    pub arrival_slack_norm: f64,
}

fn on_hundredths(x: f64) -> bool {
    (0.0..=1.0).contains(&x) && ((x * 100.0).round() - x * 100.0).abs() < 1e-6
}

impl Flight {
    pub fn features(&self) -> FeatureVec {
        let mut phi = [0.0; NUM_FEATURES];
        phi[self.carrier.index()] = 1.0;
        phi[4] = self.price_norm;
        phi[5] = self.stops_norm;
        phi[6] = self.longest_stop_norm;
        phi[7] = self.arrival_slack_norm;
        phi
    }

    /// Inverse of [`Flight::features`]; rejects vectors that the generator
    /// could not have produced.
    pub fn from_features(phi: &FeatureVec) -> Result<Flight, DomainError> {
        let hot: Vec<usize> = (0..4).filter(|&i| phi[i] != 0.0).collect();
        if hot.len() != 1 || phi[hot[0]] != 1.0 {
            return Err(DomainError::BadFlight(format!(
                "carrier block {:?} is not one-hot",
                &phi[..4]
            )));
        }
        let flight = Flight {
            carrier: Carrier::from_index(hot[0]).expect("index < 4"),
            price_norm: phi[4],
            stops_norm: phi[5],
            longest_stop_norm: phi[6],
            arrival_slack_norm: phi[7],
        };
        flight.validate()?;
        Ok(flight)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, v) in [
            ("price_norm", self.price_norm),
            ("longest_stop_norm", self.longest_stop_norm),
            ("arrival_slack_norm", self.arrival_slack_norm),
        ] {
            if !on_hundredths(v) {
                return Err(DomainError::BadFlight(format!("{name}={v} not on the 0.01 grid")));
            }
        }
        if ![0.0, 0.5, 1.0].contains(&self.stops_norm) {
            return Err(DomainError::BadFlight(format!(
                "stops_norm={} not in {{0, 0.5, 1}}",
                self.stops_norm
            )));
        }
        Ok(())
    }

    pub fn stops(&self) -> u8 {
        (self.stops_norm * 2.0).round() as u8
    }
}

/// Weights of the linear reward, each on the 5-point grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct RewardVector {
    weights: FeatureVec,
}

impl TryFrom<[f64; 8]> for RewardVector {
    type Error = DomainError;

    fn try_from(weights: [f64; 8]) -> Result<Self, Self::Error> {
        RewardVector::new(weights)
    }
}

impl From<RewardVector> for [f64; 8] {
    fn from(r: RewardVector) -> Self {
        r.weights
    }
}

fn grid_level(value: f64) -> Option<usize> {
    GRID_VALUES.iter().position(|g| *g == value)
}

impl RewardVector {
    pub fn new(weights: FeatureVec) -> Result<Self, DomainError> {
        for (index, &value) in weights.iter().enumerate() {
            if grid_level(value).is_none() {
                return Err(DomainError::OffGrid { index, value });
            }
        }
        Ok(Self { weights })
    }

    pub fn zero() -> Self {
        Self {
            weights: [0.0; NUM_FEATURES],
        }
    }

    pub fn weights(&self) -> &FeatureVec {
        &self.weights
    }

    /// Position on the grid, feature 0 most significant, base 5.
    pub fn grid_index(&self) -> usize {
        self.weights.iter().fold(0, |acc, &w| {
            acc * 5 + grid_level(w).expect("validated on construction")
        })
    }

    pub fn from_grid_index(index: usize) -> Result<Self, DomainError> {
        if index >= GRID_SIZE {
            return Err(DomainError::GridIndex(index));
        }
        let mut weights = [0.0; NUM_FEATURES];
        let mut rest = index;
        for slot in weights.iter_mut().rev() {
            *slot = GRID_VALUES[rest % 5];
            rest /= 5;
        }
        Ok(Self { weights })
    }

    pub fn negated(&self) -> Self {
        let mut w = self.weights;
        for x in &mut w {
            *x = -*x;
        }
        Self { weights: w }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Flight>", into = "Vec<Flight>")]
pub struct OptionSet {
    flights: [Flight; NUM_OPTIONS],
}

impl TryFrom<Vec<Flight>> for OptionSet {
    type Error = DomainError;

    fn try_from(v: Vec<Flight>) -> Result<Self, Self::Error> {
        let n = v.len();
        let flights: [Flight; NUM_OPTIONS] =
            v.try_into().map_err(|_| DomainError::OptionCount(n))?;
        for f in &flights {
            f.validate()?;
        }
        Ok(OptionSet { flights })
    }
}

impl From<OptionSet> for Vec<Flight> {
    fn from(o: OptionSet) -> Self {
        o.flights.to_vec()
    }
}

impl OptionSet {
    pub fn new(flights: [Flight; NUM_OPTIONS]) -> Self {
        Self { flights }
    }

    pub fn flights(&self) -> &[Flight; NUM_OPTIONS] {
        &self.flights
    }

    pub fn features(&self) -> [FeatureVec; NUM_OPTIONS] {
        self.flights.map(|f| f.features())
    }

    /// True when two options have identical features.
    pub fn has_duplicates(&self) -> bool {
        let phi = self.features();
        (0..NUM_OPTIONS).any(|i| (i + 1..NUM_OPTIONS).any(|j| phi[i] == phi[j]))
    }

    pub fn from_feature_rows(rows: &[FeatureVec]) -> Result<Self, DomainError> {
        let flights = rows
            .iter()
            .map(Flight::from_features)
            .collect::<Result<Vec<_>, _>>()?;
        OptionSet::try_from(flights)
    }
}

pub fn dot(a: &FeatureVec, b: &FeatureVec) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear reward of a flight.
pub fn reward(theta: &RewardVector, flight: &Flight) -> f64 {
    dot(theta.weights(), &flight.features())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Optimum {
    /// Lowest index in the tie set.
    pub index: usize,
    pub ties: Vec<usize>,
}

/// Argmax of a weight vector (not necessarily on the grid) over three options.
pub fn argmax_options(weights: &FeatureVec, options: &OptionSet) -> Optimum {
    let rewards = options.features().map(|phi| dot(weights, &phi));
    optimum_of_rewards(&rewards)
}

pub fn optimum_of_rewards(rewards: &[f64; NUM_OPTIONS]) -> Optimum {
    let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..NUM_OPTIONS)
        .filter(|&i| best - rewards[i] <= TIE_TOLERANCE)
        .collect();
    Optimum { index: ties[0], ties }
}

/// `optimum_of_rewards(rewards).index` without building the tie set.
#[inline]
pub fn best_option(rewards: &[f64; NUM_OPTIONS]) -> usize {
    let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..NUM_OPTIONS).find(|&i| best - rewards[i] <= TIE_TOLERANCE).unwrap_or(0)
}

pub fn optimal_option(theta: &RewardVector, options: &OptionSet) -> Optimum {
    argmax_options(theta.weights(), options)
}

fn hundredths(rng: &mut Rng) -> f64 {
    f64::from(rng.below(101)) / 100.0
}

pub fn sample_flight(rng: &mut Rng) -> Flight {
    let carrier = Carrier::ALL[rng.index(4)];
    let price_norm = hundredths(rng);
    let stops_norm = f64::from(rng.below(3)) / 2.0;
    let longest_stop_norm = hundredths(rng);
    let arrival_slack_norm = hundredths(rng);
    Flight {
        carrier,
        price_norm,
        stops_norm,
        longest_stop_norm,
        arrival_slack_norm,
    }
}

pub fn sample_option_set(rng: &mut Rng) -> OptionSet {
    OptionSet::new([sample_flight(rng), sample_flight(rng), sample_flight(rng)])
}

pub fn sample_reward(rng: &mut Rng) -> RewardVector {
    let mut weights = [0.0; NUM_FEATURES];
    for w in &mut weights {
        *w = GRID_VALUES[rng.index(5)];
    }
    RewardVector { weights }
}

/// Versioned JSONL record wrapper: writes `{"v": "v1", ...fields}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub v: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            v: SCHEMA_VERSION.to_string(),
            body,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OptionSetRecord {
    pub flights: OptionSet,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RewardRecord {
    pub weights: RewardVector,
}
