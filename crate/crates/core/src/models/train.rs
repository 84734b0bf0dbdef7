//! Gradient-descent training for the base listener and the jointly trained
//! reward/action speakers.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusRow};
use crate::lang::{Grammar, Utterance};
use crate::math::{argmax, sigmoid};
use crate::rng::{derive_seed, hash_str, mix64, Rng};

use super::bundle::ModelBundle;
use super::features::{Encoding, Featurizer};
use super::listener::{listener_loss_and_grad, ListenerExample, ListenerParams};
use super::negatives::hard_negatives;
use super::speaker::{
    action_input, latent_loss_and_grad, reward_input, ActionSpeakerParams, LatentParams, SpeakerBatch,
    SpeakerExample, SpeakerParams, DEFAULT_TAU,
};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for ListenerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            momentum: 0.9,
            l2: 1e-4,
            max_epochs: 400,
            patience: 40,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Examples per step; 0 means the whole training split.
    pub batch_size: usize,
    pub hard_negatives: usize,
    pub tau: f64,
    /// Initial mixture logit.
    pub mixture_init: f64,
}

impl Default for SpeakerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            momentum: 0.9,
            l2: 1e-4,
            max_epochs: 60,
            patience: 8,
            validation_fraction: 0.1,
            batch_size: 32,
            hard_negatives: 4,
            tau: DEFAULT_TAU,
            mixture_init: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub listener: ListenerConfig,
    pub speaker: SpeakerConfig,
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let l = &self.listener;
        let s = &self.speaker;
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if !(l.learning_rate > 0.0 && s.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&l.momentum) && (0.0..1.0).contains(&s.momentum)) {
            return bad("momentum must lie in [0, 1)");
        }
        if l.l2 < 0.0 || s.l2 < 0.0 {
            return bad("l2 must be nonnegative");
        }
        if !((0.0..1.0).contains(&l.validation_fraction) && (0.0..1.0).contains(&s.validation_fraction)) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return bad("tau must be positive and finite");
        }
        if s.hard_negatives > super::MAX_HARD_NEGATIVES {
            return bad("hard_negatives must be at most 4");
        }
        Ok(())
    }
}

/// Whole games go to validation based on a hash of their id, so the split
/// does not depend on row order.
fn is_validation(game_id: &str, fraction: f64, seed: u64) -> bool {
    let h = mix64(derive_seed(seed, hash_str(game_id)));
    ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

/// Rows in a canonical order, split into (train, validation). Falls back to
/// training on everything when either side would be empty.
fn split_rows(corpus: &Corpus, fraction: f64, seed: u64) -> (Vec<&CorpusRow>, Vec<&CorpusRow>) {
    let mut rows: Vec<&CorpusRow> = corpus.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.game_id.as_str(), a.round, a.utterance.normalized())
            .cmp(&(b.game_id.as_str(), b.round, b.utterance.normalized()))
    });
    let (val, train): (Vec<&CorpusRow>, Vec<&CorpusRow>) =
        rows.iter().partition(|r| is_validation(&r.game_id, fraction, seed));
    if val.is_empty() || train.is_empty() {
        (rows, Vec::new())
    } else {
        (train, val)
    }
}

fn momentum_step(w: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((w, v), g) in w.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerReport {
    pub train_examples: usize,
    pub validation_examples: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub validation_loss: Option<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

fn listener_examples(featurizer: &Featurizer, rows: &[&CorpusRow]) -> Vec<ListenerExample> {
    rows.iter()
        .map(|r| ListenerExample {
            encoding: featurizer.encode(&r.utterance),
            options: r.options.features(),
            target: r.xi_star,
        })
        .collect()
}

fn listener_accuracy(params: &ListenerParams, data: &[ListenerExample]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let hits = data
        .iter()
        .filter(|ex| argmax(&params.probs_encoded(&ex.encoding, &ex.options)) == ex.target)
        .count();
    hits as f64 / data.len() as f64
}

/// Full-batch gradient descent on the listener cross-entropy, keeping the
/// parameters with the lowest validation loss.
pub fn train_listener(
    corpus: &Corpus,
    featurizer: &Featurizer,
    cfg: &TrainConfig,
) -> Result<(ListenerParams, ListenerReport), ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let lc = &cfg.listener;
    let (train_rows, val_rows) = split_rows(corpus, lc.validation_fraction, cfg.seed);
    let train = listener_examples(featurizer, &train_rows);
    let val = listener_examples(featurizer, &val_rows);
    let mut params = ListenerParams::zeros(featurizer.clone());
    let mut velocity = vec![0.0; params.weights().len()];
    let monitor = |w: &[f64]| -> f64 {
        if val.is_empty() {
            listener_loss_and_grad(w, &train, 0.0).0
        } else {
            listener_loss_and_grad(w, &val, 0.0).0
        }
    };
    let initial_train_loss = listener_loss_and_grad(params.weights(), &train, 0.0).0;
    let mut best = (monitor(params.weights()), 0, params.weights().to_vec());
    let mut epochs_run = 0;
    for epoch in 1..=lc.max_epochs {
        let (loss, grad) = listener_loss_and_grad(params.weights(), &train, lc.l2);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::Diverged { epoch, loss });
        }
        momentum_step(params.weights_mut(), &mut velocity, &grad, lc.learning_rate, lc.momentum);
        epochs_run = epoch;
        let watched = monitor(params.weights());
        if !watched.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: watched });
        }
        if watched < best.0 {
            best = (watched, epoch, params.weights().to_vec());
        } else if epoch - best.1 >= lc.patience {
            break;
        }
        if epoch % 50 == 0 {
            debug!("listener epoch {epoch}: train {loss:.4}, monitored {watched:.4}");
        }
    }
    params.weights_mut().copy_from_slice(&best.2);
    let final_train_loss = listener_loss_and_grad(params.weights(), &train, 0.0).0;
    let report = ListenerReport {
        train_examples: train.len(),
        validation_examples: val.len(),
        epochs_run,
        best_epoch: best.1,
        initial_train_loss,
        final_train_loss,
        validation_loss: (!val.is_empty()).then(|| listener_loss_and_grad(params.weights(), &val, 0.0).0),
        train_accuracy: listener_accuracy(&params, &train),
        validation_accuracy: (!val.is_empty()).then(|| listener_accuracy(&params, &val)),
    };
    info!(
        "listener trained: {} epochs (best {}), train loss {:.4} -> {:.4}, train acc {:.3}",
        report.epochs_run, report.best_epoch, report.initial_train_loss, report.final_train_loss, report.train_accuracy
    );
    Ok((params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerReport {
    pub train_examples: usize,
    pub validation_examples: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub validation_loss: Option<f64>,
    pub mixture_logit: f64,
    pub reward_descriptive_prob: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedSpeakers {
    pub reward: SpeakerParams,
    pub action: ActionSpeakerParams,
    pub mixture_logit: f64,
    pub report: SpeakerReport,
}

/// Training examples indexed into a shared table of distinct utterances.
struct SpeakerData {
    encodings: Vec<Encoding>,
    /// (observed utterance id, hard-negative ids, reward input, action input)
    items: Vec<SpeakerItem>,
}

struct SpeakerItem {
    utterance: usize,
    negatives: Vec<usize>,
    reward_input: [f64; super::speaker::REWARD_INPUT],
    action_input: [f64; super::speaker::ACTION_INPUT],
}

fn speaker_data(featurizer: &Featurizer, rows: &[&CorpusRow], k: usize, seed: u64) -> SpeakerData {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut encodings = Vec::new();
    let mut intern = |u: &Utterance, encodings: &mut Vec<Encoding>| -> usize {
        let key = u.normalized();
        *ids.entry(key).or_insert_with(|| {
            encodings.push(featurizer.encode(u));
            encodings.len() - 1
        })
    };
    let mut items = Vec::with_capacity(rows.len());
    for r in rows {
        let utterance = intern(&r.utterance, &mut encodings);
        let mut rng = Rng::new(derive_seed(seed, hash_str(&r.utterance.normalized())));
        let negatives = hard_negatives(&r.utterance, k, &mut rng)
            .iter()
            .map(|n| intern(n, &mut encodings))
            .filter(|&n| n != utterance)
            .collect();
        items.push(SpeakerItem {
            utterance,
            negatives,
            reward_input: reward_input(&r.theta),
            action_input: action_input(&r.options.flights()[r.xi_star], &r.options),
        });
    }
    SpeakerData { encodings, items }
}

/// Each example is normalized over the distinct utterances observed in its
/// batch together with its own hard negatives.
fn make_batch(data: &SpeakerData, members: &[usize]) -> SpeakerBatch {
    let in_batch: BTreeSet<usize> = members.iter().map(|&i| data.items[i].utterance).collect();
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut encodings = Vec::new();
    let mut local_id = |g: usize, encodings: &mut Vec<Encoding>| -> usize {
        *local.entry(g).or_insert_with(|| {
            encodings.push(data.encodings[g].clone());
            encodings.len() - 1
        })
    };
    let shared: Vec<usize> = in_batch.iter().map(|&g| local_id(g, &mut encodings)).collect();
    let examples = members
        .iter()
        .map(|&i| {
            let item = &data.items[i];
            let mut normalizer = shared.clone();
            for &n in &item.negatives {
                if !in_batch.contains(&n) {
                    normalizer.push(local_id(n, &mut encodings));
                }
            }
            let own = local_id(item.utterance, &mut encodings);
            let target = normalizer.iter().position(|&x| x == own).expect("observed utterance is in batch");
            SpeakerExample {
                normalizer,
                target,
                reward_input: item.reward_input,
                action_input: item.action_input,
            }
        })
        .collect();
    SpeakerBatch { encodings, examples }
}

fn chunked(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    if order.is_empty() {
        return Vec::new();
    }
    let size = if batch_size == 0 { order.len() } else { batch_size };
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Example-weighted mean loss over fixed batches, without regularization.
fn mean_batch_loss(params: &LatentParams, batches: &[SpeakerBatch], tau: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for b in batches {
        let (loss, _) = latent_loss_and_grad(params, b, tau, 0.0);
        total += loss * b.examples.len() as f64;
        n += b.examples.len();
    }
    total / n.max(1) as f64
}

/// Joint training of the reward and action speakers under the latent
/// utterance-type objective.
pub fn train_speaker_latent(
    corpus: &Corpus,
    featurizer: &Featurizer,
    cfg: &TrainConfig,
) -> Result<TrainedSpeakers, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let sc = &cfg.speaker;
    let (train_rows, val_rows) = split_rows(corpus, sc.validation_fraction, cfg.seed);
    let train = speaker_data(featurizer, &train_rows, sc.hard_negatives, cfg.seed);
    let val = speaker_data(featurizer, &val_rows, sc.hard_negatives, cfg.seed);
    let canonical: Vec<usize> = (0..train.items.len()).collect();
    let train_eval: Vec<SpeakerBatch> = chunked(&canonical, sc.batch_size)
        .iter()
        .map(|m| make_batch(&train, m))
        .collect();
    let val_eval: Vec<SpeakerBatch> = chunked(&(0..val.items.len()).collect::<Vec<_>>(), sc.batch_size)
        .iter()
        .map(|m| make_batch(&val, m))
        .collect();
    let watched = |p: &LatentParams| {
        if val_eval.is_empty() {
            mean_batch_loss(p, &train_eval, sc.tau)
        } else {
            mean_batch_loss(p, &val_eval, sc.tau)
        }
    };

    let mut params = LatentParams::zeros(featurizer.dim(), sc.mixture_init);
    let mut flat = params.flatten();
    let mut velocity = vec![0.0; flat.len()];
    let initial_train_loss = mean_batch_loss(&params, &train_eval, sc.tau);
    let mut best = (watched(&params), 0, params.clone());
    let mut rng = Rng::new(derive_seed(cfg.seed, 0x5eed_5eed));
    let mut epochs_run = 0;
    for epoch in 1..=sc.max_epochs {
        let mut order = canonical.clone();
        if sc.batch_size != 0 {
            rng.shuffle(&mut order);
        }
        for members in chunked(&order, sc.batch_size) {
            let batch = if sc.batch_size == 0 {
                train_eval[0].clone()
            } else {
                make_batch(&train, &members)
            };
            let (loss, grad) = latent_loss_and_grad(&params, &batch, sc.tau, sc.l2);
            let g = grad.flatten();
            if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Diverged { epoch, loss });
            }
            momentum_step(&mut flat, &mut velocity, &g, sc.learning_rate, sc.momentum);
            params = params.unflatten(&flat);
        }
        epochs_run = epoch;
        let w = watched(&params);
        if !w.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: w });
        }
        debug!("speaker epoch {epoch}: monitored loss {w:.4}, mixture {:.3}", sigmoid(params.mixture_logit));
        if w < best.0 {
            best = (w, epoch, params.clone());
        } else if epoch - best.1 >= sc.patience {
            break;
        }
    }
    let params = best.2;
    let report = SpeakerReport {
        train_examples: train.items.len(),
        validation_examples: val.items.len(),
        epochs_run,
        best_epoch: best.1,
        initial_train_loss,
        final_train_loss: mean_batch_loss(&params, &train_eval, sc.tau),
        validation_loss: (!val_eval.is_empty()).then(|| mean_batch_loss(&params, &val_eval, sc.tau)),
        mixture_logit: params.mixture_logit,
        reward_descriptive_prob: sigmoid(params.mixture_logit),
    };
    info!(
        "speakers trained: {} epochs (best {}), train loss {:.4} -> {:.4}, p(reward-descriptive) {:.3}",
        report.epochs_run,
        report.best_epoch,
        report.initial_train_loss,
        report.final_train_loss,
        report.reward_descriptive_prob
    );
    let reward = SpeakerParams::from_weights(featurizer.clone(), params.reward, sc.tau).expect("shape matches");
    let action = ActionSpeakerParams::from_weights(featurizer.clone(), params.action).expect("shape matches");
    Ok(TrainedSpeakers {
        reward,
        action,
        mixture_logit: params.mixture_logit,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleReport {
    pub listeners: Vec<ListenerReport>,
    pub speakers: Vec<SpeakerReport>,
}

/// Trains `members` listeners and reward speakers on seeds derived from
/// `cfg.seed`. The action speaker and mixture logit come from the first
/// member.
pub fn train_bundle(
    corpus: &Corpus,
    grammar: Arc<Grammar>,
    cfg: &TrainConfig,
    members: usize,
) -> Result<(ModelBundle, BundleReport), ModelError> {
    cfg.validate()?;
    if members == 0 {
        return Err(ModelError::EmptyEnsemble);
    }
    let featurizer = Featurizer::build(grammar, corpus.rows.iter().map(|r| &r.utterance));
    let mut listeners = Vec::with_capacity(members);
    let mut speakers = Vec::with_capacity(members);
    let mut report = BundleReport {
        listeners: Vec::new(),
        speakers: Vec::new(),
    };
    let mut first = None;
    for m in 0..members {
        let member_cfg = TrainConfig {
            seed: if m == 0 { cfg.seed } else { derive_seed(cfg.seed, m as u64) },
            ..cfg.clone()
        };
        let (listener, lr) = train_listener(corpus, &featurizer, &member_cfg)?;
        let trained = train_speaker_latent(corpus, &featurizer, &member_cfg)?;
        listeners.push(listener);
        speakers.push(trained.reward.clone());
        report.listeners.push(lr);
        report.speakers.push(trained.report.clone());
        if first.is_none() {
            first = Some(trained);
        }
    }
    let first = first.expect("at least one member");
    let bundle = ModelBundle {
        featurizer,
        listeners,
        speakers,
        action_speaker: Some(first.action),
        mixture_logit: first.mixture_logit,
    };
    Ok((bundle, report))
}
