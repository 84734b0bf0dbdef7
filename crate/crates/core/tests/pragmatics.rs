mod common;

use std::collections::HashMap;
use std::sync::Arc;

use flightpref::domain::{
    optimal_option, sample_option_set, sample_reward, Carrier, Flight, OptionSet, RewardVector, GRID_SIZE,
    GRID_VALUES, NUM_FEATURES, NUM_OPTIONS,
};
use flightpref::models::{Featurizer, ListenerParams, SpeakerParams};
use flightpref::pragmatics::{
    marginal_tv, p_opt, p_opt_rewards, posterior_mean, Beta, Inference, Likelihood, PosteriorMode, Pragmatics,
    PragmaticsConfig, Proposal, RewardPosterior,
};
use flightpref::{Grammar, Listener, Rng, Utterance, UtteranceSet};

/// Listener that looks its answer up by utterance text.
struct TableListener(HashMap<String, [f64; NUM_OPTIONS]>);

impl Listener for TableListener {
    fn option_probs(&self, u: &Utterance, _options: &OptionSet) -> [f64; NUM_OPTIONS] {
        self.0[&u.normalized()]
    }
}

const U1: &str = "jetblue";
const U2: &str = "cheapest one please";

fn table_engine(l1: [f64; 3], l2: [f64; 3]) -> Pragmatics {
    let grammar = Arc::new(Grammar::default_v1());
    let support = vec![Utterance::new(U1), Utterance::new(U2)];
    let f = Featurizer::build(grammar, support.iter());
    let table = HashMap::from([(U1.to_string(), l1), (U2.to_string(), l2)]);
    Pragmatics::new(Arc::new(TableListener(table)), vec![SpeakerParams::zeros(f, 3.0)], UtteranceSet::new(support))
        .unwrap()
}

fn flat_flight(carrier: Carrier) -> Flight {
    Flight {
        carrier,
        price_norm: 0.5,
        stops_norm: 0.5,
        longest_stop_norm: 0.5,
        arrival_slack_norm: 0.5,
    }
}

/// Options identical except for the carrier: American, Delta, JetBlue.
fn carrier_options() -> OptionSet {
    OptionSet::new([
        flat_flight(Carrier::American),
        flat_flight(Carrier::Delta),
        flat_flight(Carrier::JetBlue),
    ])
}

fn likes(carrier: Carrier) -> RewardVector {
    let mut w = [0.0; 8];
    w[carrier.index()] = 1.0;
    RewardVector::new(w).unwrap()
}

fn two_point_prior(a: &RewardVector, b: &RewardVector) -> RewardPosterior {
    RewardPosterior::from_points(
        vec![a.grid_index() as u32, b.grid_index() as u32],
        vec![0.5, 0.5],
        PosteriorMode::Exact,
    )
    .unwrap()
}

fn cfg(alpha: f64, beta: Beta) -> PragmaticsConfig {
    PragmaticsConfig {
        alpha,
        beta,
        inference: Inference::Exact,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn p_opt_examples() {
    assert_eq!(p_opt_rewards(&[1.05, 0.2, -0.3], Beta::Finite(0.0)), [1.0 / 3.0; 3]);
    assert_eq!(p_opt_rewards(&[1.05, 0.2, -0.3], Beta::Infinite), [1.0, 0.0, 0.0]);
    let p = p_opt_rewards(&[0.0, std::f64::consts::LN_2 / 2.0, 0.0], Beta::Finite(2.0));
    for (got, want) in p.iter().zip([0.25, 0.5, 0.25]) {
        assert!(close(*got, want, 1e-12), "{p:?}");
    }
    assert_eq!(p_opt_rewards(&[0.4, 0.4, -1.0], Beta::Infinite), [0.5, 0.5, 0.0]);
}

#[test]
fn p_opt_infinite_beta_is_uniform_on_ties() {
    let mut rng = Rng::new(21);
    for _ in 0..2000 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let ties = optimal_option(&theta, &m).ties;
        let p = p_opt(&theta, &m, Beta::Infinite);
        for (i, pi) in p.iter().enumerate() {
            let want = if ties.contains(&i) { 1.0 / ties.len() as f64 } else { 0.0 };
            assert_eq!(*pi, want);
        }
    }
}

#[test]
fn p_refer_two_point_support() {
    let engine = table_engine([0.8, 0.1, 0.1], [0.2, 0.5, 0.3]);
    let m = carrier_options();
    assert!(close(engine.p_refer(&Utterance::new(U1), 0, &m), 0.8, 1e-12));
    assert!(close(engine.p_refer(&Utterance::new(U2), 0, &m), 0.2, 1e-12));
    for xi in 0..NUM_OPTIONS {
        let d = engine.p_refer_distribution(xi, &m);
        assert!(close(d.iter().sum::<f64>(), 1.0, 1e-12));
    }
}

#[test]
fn p_refer_is_uniform_for_a_flat_listener() {
    let t = common::trained();
    let flat = t.engine.with_listener(Arc::new(ListenerParams::zeros(t.bundle.featurizer.clone())));
    let m = sample_option_set(&mut Rng::new(2));
    let n = flat.support().len() as f64;
    for xi in 0..NUM_OPTIONS {
        assert!(flat.p_refer_distribution(xi, &m).iter().all(|p| close(*p, 1.0 / n, 1e-15)));
    }
}

#[test]
fn p_action_marginalizes_over_options() {
    let t = common::trained();
    let engine = &t.engine;
    let mut rng = Rng::new(5);
    let support = engine.support().as_slice();
    for _ in 0..40 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let u = &support[rng.index(support.len())];
        let refer: Vec<f64> = (0..NUM_OPTIONS).map(|xi| engine.p_refer(u, xi, &m)).collect();
        for beta in [Beta::Finite(0.0), Beta::Finite(1.5), Beta::Infinite] {
            let popt = p_opt(&theta, &m, beta);
            let brute: f64 = (0..NUM_OPTIONS).map(|xi| refer[xi] * popt[xi]).sum();
            assert!(close(engine.p_action(u, &theta, &m, beta), brute, 1e-15));
        }
        let mean = refer.iter().sum::<f64>() / 3.0;
        assert!(close(engine.p_action(u, &theta, &m, Beta::Finite(0.0)), mean, 1e-15));
        let opt = optimal_option(&theta, &m);
        if opt.ties.len() == 1 {
            assert_eq!(engine.p_action(u, &theta, &m, Beta::Infinite), refer[opt.index]);
        }
    }
}

#[test]
fn s1_mixture_endpoints_and_arithmetic() {
    let engine = table_engine([0.4, 0.1, 0.5], [0.6, 0.9, 0.5]);
    let m = carrier_options();
    let theta = likes(Carrier::American);
    let u = Utterance::new(U1);
    // p_action = p_refer(u | American) = 0.4; the zero speaker gives 0.5
    assert!(close(engine.p_action(&u, &theta, &m, Beta::Infinite), 0.4, 1e-12));
    assert!(close(engine.p_reward(&u, &theta), 0.5, 1e-12));
    assert!(close(engine.s1_prob(&u, &theta, &m, &cfg(0.5, Beta::Infinite)), 0.45, 1e-12));
    assert!(close(engine.s1_prob(&u, &theta, &m, &cfg(0.25, Beta::Infinite)), 0.475, 1e-12));

    let t = common::trained();
    let mut rng = Rng::new(8);
    let support = t.engine.support().as_slice();
    for _ in 0..30 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let u = &support[rng.index(support.len())];
        let beta = Beta::Infinite;
        assert_eq!(t.engine.s1_prob(u, &theta, &m, &cfg(1.0, beta)), t.engine.p_action(u, &theta, &m, beta));
        assert_eq!(t.engine.s1_prob(u, &theta, &m, &cfg(0.0, beta)), t.engine.p_reward(u, &theta));
    }
}

#[test]
fn s1_is_a_distribution_over_the_support() {
    let t = common::trained();
    let mut rng = Rng::new(13);
    for _ in 0..20 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let alpha = rng.unit();
        for beta in [Beta::Finite(0.0), Beta::Finite(3.0), Beta::Infinite] {
            let d = t.engine.s1_distribution(&theta, &m, alpha, beta);
            assert!(close(d.iter().sum::<f64>(), 1.0, 1e-9));
            assert!(d.iter().all(|p| *p >= 0.0));
        }
    }
}

#[test]
fn marginalization_identity_holds() {
    let t = common::trained();
    let mut rng = Rng::new(44);
    for i in 0..100 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let alpha = [0.0, 0.5, 1.0][i % 3];
        let beta = if i % 4 == 0 { Beta::Finite(0.0) } else { Beta::Infinite };
        let gap = t.engine.marginalization_identity_check(&theta, &m, &cfg(alpha, beta));
        assert!(gap < 1e-12, "{gap}");
    }
}

#[test]
fn bayes_arithmetic_on_two_points() {
    // p_refer(u1 | option 0) = 0.3 and p_refer(u1 | option 1) = 0.1
    let engine = table_engine([0.3, 0.1, 0.6], [0.7, 0.9, 0.4]);
    let m = carrier_options();
    let (a, b) = (likes(Carrier::American), likes(Carrier::Delta));
    let prior = two_point_prior(&a, &b);
    let up = engine
        .l2_update(&prior, &Utterance::new(U1), &m, &cfg(1.0, Beta::Infinite), &mut Rng::new(0))
        .unwrap();
    assert!(!up.degenerate);
    assert!(close(up.posterior.prob_of(&a), 0.75, 1e-12));
    assert!(close(up.posterior.prob_of(&b), 0.25, 1e-12));
}

#[test]
fn vanishing_likelihood_keeps_the_prior() {
    let engine = table_engine([0.0, 0.0, 1.0], [0.5, 0.5, 0.0]);
    let m = carrier_options();
    let prior = two_point_prior(&likes(Carrier::American), &likes(Carrier::Delta));
    let up = engine
        .l2_update(&prior, &Utterance::new(U1), &m, &cfg(1.0, Beta::Infinite), &mut Rng::new(0))
        .unwrap();
    assert!(up.degenerate);
    assert_eq!(up.posterior, prior);
}

fn random_prior(rng: &mut Rng) -> RewardPosterior {
    RewardPosterior::from_grid_weights((0..GRID_SIZE).map(|_| rng.unit()).collect()).unwrap()
}

#[test]
fn uninformative_likelihood_keeps_the_prior() {
    let t = common::trained();
    let mut rng = Rng::new(3);
    let prior = random_prior(&mut rng);
    let m = sample_option_set(&mut rng);
    let u = Utterance::new("cheapest one please");
    // beta = 0 makes the action speaker independent of theta
    let up = t.engine.l2_update(&prior, &u, &m, &cfg(1.0, Beta::Finite(0.0)), &mut rng).unwrap();
    for (a, b) in up.posterior.weights().iter().zip(prior.weights()) {
        assert!(close(*a, *b, 1e-15 + 1e-12 * b));
    }
    let none = t.engine.sequential_update(&prior, &[], &cfg(0.5, Beta::Infinite), &mut rng).unwrap();
    assert_eq!(none.posterior, prior);
}

#[test]
fn alpha_endpoints_match_single_component_updates() {
    let t = common::trained();
    let mut rng = Rng::new(17);
    let m = sample_option_set(&mut rng);
    let u = Utterance::new("i like delta");
    let prior = RewardPosterior::uniform();
    let mixed = |alpha: f64, rng: &mut Rng| t.engine.l2_update(&prior, &u, &m, &cfg(alpha, Beta::Infinite), rng).unwrap();
    let single = |kind: Likelihood, rng: &mut Rng| {
        t.engine
            .update_with(&prior, &u, &m, kind, Beta::Infinite, Inference::Exact, rng)
            .unwrap()
    };
    assert_eq!(mixed(1.0, &mut rng).posterior.weights(), single(Likelihood::ActionOnly, &mut rng).posterior.weights());
    assert_eq!(mixed(0.0, &mut rng).posterior.weights(), single(Likelihood::RewardOnly, &mut rng).posterior.weights());
}

fn product_posterior(prior: &RewardPosterior, likelihoods: &[Vec<f64>], scale: f64) -> RewardPosterior {
    let w: Vec<f64> = prior
        .weights()
        .iter()
        .enumerate()
        .map(|(i, p)| p * likelihoods.iter().map(|l| l[i] * scale).product::<f64>())
        .collect();
    prior.reweighted(w).unwrap()
}

fn max_rel_gap(a: &RewardPosterior, b: &RewardPosterior) -> f64 {
    a.weights()
        .iter()
        .zip(b.weights())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

#[test]
fn sequential_updates_multiply_likelihoods() {
    let t = common::trained();
    let mut rng = Rng::new(29);
    let config = cfg(0.5, Beta::Infinite);
    let rounds: Vec<(Utterance, OptionSet)> = ["cheapest one please", "i like delta", "nonstop"]
        .iter()
        .map(|s| (Utterance::new(*s), sample_option_set(&mut rng)))
        .collect();
    let prior = RewardPosterior::uniform();
    let forward = t.engine.sequential_update(&prior, &rounds, &config, &mut rng).unwrap();
    let mut reversed = rounds.clone();
    reversed.reverse();
    let backward = t.engine.sequential_update(&prior, &reversed, &config, &mut rng).unwrap();
    assert!(max_rel_gap(&forward.posterior, &backward.posterior) < 1e-9);

    let likelihoods: Vec<Vec<f64>> = rounds
        .iter()
        .map(|(u, m)| t.engine.likelihood_grid(u, m, config.beta, config.likelihood()))
        .collect();
    let two = t.engine.sequential_update(&prior, &rounds[..2], &config, &mut rng).unwrap();
    assert!(max_rel_gap(&two.posterior, &product_posterior(&prior, &likelihoods[..2], 1.0)) < 1e-9);
    for scale in [1e-3, 7.0] {
        let one = t.engine.l2_update(&prior, &rounds[0].0, &rounds[0].1, &config, &mut rng).unwrap();
        assert!(max_rel_gap(&one.posterior, &product_posterior(&prior, &likelihoods[..1], scale)) < 1e-9);
    }
}

#[test]
fn posterior_mean_matches_weighted_sum() {
    let mut rng = Rng::new(51);
    let p = random_prior(&mut rng);
    let mut brute = [0.0; NUM_FEATURES];
    for (idx, w) in p.iter() {
        let theta = RewardVector::from_grid_index(idx).unwrap();
        for (b, x) in brute.iter_mut().zip(theta.weights()) {
            *b += w * x;
        }
    }
    let mean = posterior_mean(&p).unwrap();
    for (a, b) in mean.iter().zip(&brute) {
        assert!(close(*a, *b, 1e-12));
    }
    let theta = sample_reward(&mut rng);
    let point = RewardPosterior::point_mass(&theta);
    assert_eq!(&posterior_mean(&point).unwrap(), theta.weights());
    let marg = point.marginals();
    for (f, row) in marg.iter().enumerate() {
        let hot = GRID_VALUES.iter().position(|v| *v == theta.weights()[f]).unwrap();
        for (k, x) in row.iter().enumerate() {
            assert_eq!(*x, if k == hot { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn importance_sampling_matches_exact_marginals() {
    let t = common::trained();
    let mut rng = Rng::new(61);
    let m = sample_option_set(&mut rng);
    let u = Utterance::new("cheapest one please");
    let config = cfg(0.5, Beta::Infinite);
    let prior = RewardPosterior::uniform();
    let exact = t.engine.l2_update(&prior, &u, &m, &config, &mut rng).unwrap().posterior;
    let sampled = t
        .engine
        .l2_update(
            &prior,
            &u,
            &m,
            &PragmaticsConfig {
                inference: Inference::Importance {
                    n_samples: 200_000,
                    proposal: Proposal::Uniform,
                },
                ..config
            },
            &mut rng,
        )
        .unwrap()
        .posterior;
    assert_eq!(sampled.mode(), PosteriorMode::Importance);
    assert!(sampled.ess().unwrap() > 1.0);
    let tv = marginal_tv(&exact, &sampled);
    assert!(tv < 0.05, "{tv}");
}

#[test]
fn importance_error_shrinks_like_root_n() {
    let t = common::trained();
    let mut rng = Rng::new(71);
    let m = sample_option_set(&mut rng);
    let u = Utterance::new("i like delta");
    let config = cfg(0.5, Beta::Infinite);
    let prior = RewardPosterior::uniform();
    let exact = t.engine.l2_update(&prior, &u, &m, &config, &mut rng).unwrap().posterior.mean();
    let error_at = |n: usize, seed: u64| {
        let c = PragmaticsConfig {
            inference: Inference::Importance {
                n_samples: n,
                proposal: Proposal::Prior,
            },
            ..config
        };
        let mean = t.engine.l2_update(&prior, &u, &m, &c, &mut Rng::new(seed)).unwrap().posterior.mean();
        mean.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    let small = median((0..20).map(|s| error_at(4000, 1000 + s)).collect());
    let large = median((0..20).map(|s| error_at(16_000, 2000 + s)).collect());
    let ratio = small / large;
    assert!((1.6..=2.6).contains(&ratio), "{small} / {large} = {ratio}");
}

#[test]
fn importance_rejects_bad_settings() {
    let t = common::trained();
    let m = sample_option_set(&mut Rng::new(1));
    let u = Utterance::new("nonstop");
    let bad = PragmaticsConfig {
        inference: Inference::Importance {
            n_samples: 0,
            proposal: Proposal::Prior,
        },
        ..PragmaticsConfig::default()
    };
    assert!(t.engine.l2_update(&RewardPosterior::uniform(), &u, &m, &bad, &mut Rng::new(1)).is_err());
    let sparse = RewardPosterior::point_mass(&likes(Carrier::Delta));
    let uniform_proposal = PragmaticsConfig {
        inference: Inference::Importance {
            n_samples: 10,
            proposal: Proposal::Uniform,
        },
        ..PragmaticsConfig::default()
    };
    assert!(t.engine.l2_update(&sparse, &u, &m, &uniform_proposal, &mut Rng::new(1)).is_err());
    assert!(t.engine.l2_update(&sparse, &u, &m, &cfg(1.5, Beta::Infinite), &mut Rng::new(1)).is_err());
}

#[test]
fn snapshot_json_shape() {
    let p = RewardPosterior::uniform();
    let v: serde_json::Value = serde_json::to_value(p.snapshot()).unwrap();
    assert_eq!(v["mode"], "exact");
    assert_eq!(v["mean"].as_array().unwrap().len(), 8);
    assert!(v["mean"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap().abs() < 1e-12));
    let marg = v["marginals"].as_array().unwrap();
    assert_eq!(marg.len(), 8);
    assert!(marg.iter().all(|row| row.as_array().unwrap().len() == 5));
    assert!(v.get("ess").is_none());

    let sampled = RewardPosterior::from_points(vec![0, 1, 1], vec![1.0, 1.0, 2.0], PosteriorMode::Importance).unwrap();
    let v: serde_json::Value = serde_json::to_value(sampled.snapshot()).unwrap();
    assert_eq!(v["mode"], "importance");
    assert!(v["ess"].as_f64().unwrap() > 0.0);
}
