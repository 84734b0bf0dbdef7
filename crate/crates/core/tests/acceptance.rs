//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use flightpref::domain::{optimal_option, sample_option_set, sample_reward, OptionSet, NUM_OPTIONS};
use flightpref::eval::{
    evaluate, known_action_ablation, oracle_k_curve, EvalConfig, EvalReport, ModelSummary, ACTION_ONLY, FULL,
    KNOWN_ACTION, ORACLE_SWITCH, REWARD_ONLY,
};
use flightpref::game::{
    generate_games, synthetic_utterance, AssistantAction, AssistantPolicy, DatagenConfig, GameRecord, Outcome, Phase,
    Session, SyntheticSpeaker,
};
use flightpref::math::argmax;
use flightpref::models::speaker::{action_input, reward_input};
use flightpref::models::{
    latent_loss_and_grad, listener_loss_and_grad, Featurizer, LatentParams, ListenerExample, ListenerParams,
    NoisyListener, SpeakerBatch, SpeakerExample,
};
use flightpref::pragmatics::{
    marginal_tv, p_opt, Beta, Inference, Likelihood, Pragmatics, PragmaticsConfig, Proposal, RewardPosterior,
};
use flightpref::{Grammar, Listener, Rng, Utterance};

struct Verdict {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn cfg(alpha: f64) -> PragmaticsConfig {
    PragmaticsConfig {
        alpha,
        beta: Beta::Infinite,
        ..Default::default()
    }
}

fn random_utterance(engine: &Pragmatics, rng: &mut Rng) -> Utterance {
    let support = engine.support().as_slice();
    support[rng.index(support.len())].clone()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn marginalization(t: &common::Trained) -> Verdict {
    let engine = &t.engine;
    let mut rng = Rng::new(1001);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let theta = sample_reward(&mut rng);
        let m = sample_option_set(&mut rng);
        let alpha = rng.unit();
        let beta = if i % 5 == 0 { Beta::Infinite } else { Beta::Finite(10.0 * rng.unit()) };
        let popt = p_opt(&theta, &m, beta);
        let refer: Vec<Vec<f64>> = (0..NUM_OPTIONS).map(|k| engine.p_refer_distribution(k, &m)).collect();
        let reward = engine.speaker().distribution(theta.grid_index());
        let s1 = engine.s1_distribution(&theta, &m, alpha, beta);
        for (j, s) in s1.iter().enumerate() {
            // sum over xi of p(xi | theta) * p(u | theta, xi) with the mixture inside
            let factorized: f64 = (0..NUM_OPTIONS)
                .map(|k| popt[k] * (alpha * refer[k][j] + (1.0 - alpha) * reward[j]))
                .sum();
            worst = worst.max((factorized - s).abs());
        }
    }
    outcome(worst < 1e-10, format!("max discrepancy {worst:.2e} over 100 configs"))
}

fn ablation_equivalence(t: &common::Trained) -> Verdict {
    let engine = &t.engine;
    let mut rng = Rng::new(1002);
    let mut mismatches = 0;
    for _ in 0..20 {
        let warm = engine
            .l2_update(
                &RewardPosterior::uniform(),
                &random_utterance(engine, &mut rng),
                &sample_option_set(&mut rng),
                &cfg(0.5),
                &mut rng,
            )
            .unwrap()
            .posterior;
        let u = random_utterance(engine, &mut rng);
        let m = sample_option_set(&mut rng);
        for (alpha, kind) in [(1.0, Likelihood::ActionOnly), (0.0, Likelihood::RewardOnly)] {
            let full = engine.l2_update(&warm, &u, &m, &cfg(alpha), &mut rng).unwrap();
            let single = engine
                .update_with(&warm, &u, &m, kind, Beta::Infinite, Inference::Exact, &mut rng)
                .unwrap();
            if full.posterior.weights() != single.posterior.weights() {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 40 posteriors differ bitwise"))
}

fn importance_sampling(t: &common::Trained) -> Verdict {
    let engine = &t.engine;
    let importance = |n: usize| PragmaticsConfig {
        inference: Inference::Importance {
            n_samples: n,
            proposal: Proposal::Uniform,
        },
        ..cfg(0.5)
    };
    let prior = RewardPosterior::uniform();
    let mut rng = Rng::new(1003);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = random_utterance(engine, &mut rng);
        let m = sample_option_set(&mut rng);
        let exact = engine.l2_update(&prior, &u, &m, &cfg(0.5), &mut rng).unwrap().posterior;
        let sampled = engine.l2_update(&prior, &u, &m, &importance(200_000), &mut rng).unwrap().posterior;
        worst = worst.max(marginal_tv(&exact, &sampled));
    }

    let u = Utterance::new("cheapest one please");
    let m = sample_option_set(&mut Rng::new(1004));
    let exact = engine.l2_update(&prior, &u, &m, &cfg(0.5), &mut rng).unwrap().posterior;
    let error_at = |n: usize, seed: u64| {
        let p = engine.l2_update(&prior, &u, &m, &importance(n), &mut Rng::new(seed)).unwrap().posterior;
        marginal_tv(&exact, &p)
    };
    let small = median((0..20).map(|s| error_at(50_000, 5000 + s)).collect());
    let large = median((0..20).map(|s| error_at(200_000, 6000 + s)).collect());
    let ratio = small / large;
    outcome(
        worst < 0.05 && (1.6..=2.6).contains(&ratio),
        format!("worst marginal TV {worst:.4} at n=200000; median error ratio n=50000 vs 200000 = {ratio:.2}"),
    )
}

fn oracle_k() -> Verdict {
    let curve = oracle_k_curve(500, 1000, 1005);
    let acc: Vec<f64> = curve.iter().map(|p| p.accuracy.mean).collect();
    let monotone = acc.windows(2).all(|w| w[1] >= w[0]);
    let k0 = acc[0];
    let k8 = acc[8];
    let reported: Vec<String> = [(1, 43.0), (2, 51.5), (3, 60.2), (4, 64.7)]
        .iter()
        .map(|(k, target)| format!("k={k} {:.1} (reference {target})", 100.0 * acc[*k]))
        .collect();
    outcome(
        monotone && (0.30..=0.37).contains(&k0) && k8 >= 0.99,
        format!(
            "k=0 {:.3}, k=8 {:.3}, monotone {monotone}; {}; reference values used a different flight generator",
            k0,
            k8,
            reported.join(", ")
        ),
    )
}

fn eval_config(seed: u64) -> EvalConfig {
    EvalConfig {
        seed,
        ..Default::default()
    }
}

fn s1_games(t: &common::Trained, n: usize, seed: u64, prefix: &str) -> Vec<GameRecord> {
    generate_games(
        &DatagenConfig {
            n_games: n,
            seed,
            id_prefix: prefix.into(),
            speaker: SyntheticSpeaker::S1Sampler {
                alpha: 0.5,
                beta: Beta::Infinite,
            },
            ..Default::default()
        },
        &t.grammar,
        Some(&t.engine),
    )
    .unwrap()
}

fn model<'a>(report: &'a EvalReport, name: &str) -> &'a ModelSummary {
    report.model(name).unwrap()
}

fn full_vs_ablations(t: &common::Trained) -> Verdict {
    let games = s1_games(t, 91, 1006, "t");
    let report = evaluate(&games, &t.engine, &eval_config(1006)).unwrap();
    let acc = |name: &str| model(&report, name).accuracy.mean;
    let vs_action = report.comparison(FULL, ACTION_ONLY).unwrap();
    let vs_reward = report.comparison(FULL, REWARD_ONLY).unwrap();
    let switch_ok = acc(ORACLE_SWITCH) >= acc(ACTION_ONLY).max(acc(REWARD_ONLY));
    let beats = |c: &flightpref::eval::Comparison| c.mean_difference > 0.0 && c.p_value < 0.05;
    outcome(
        beats(vs_action) && beats(vs_reward) && switch_ok,
        format!(
            "full {:.1} / action-only {:.1} (p={:.4}) / reward-only {:.1} (p={:.4}) / oracle switch {:.1}",
            100.0 * acc(FULL),
            100.0 * acc(ACTION_ONLY),
            vs_action.p_value,
            100.0 * acc(REWARD_ONLY),
            vs_reward.p_value,
            100.0 * acc(ORACLE_SWITCH),
        ),
    )
}

fn multi_turn(t: &common::Trained) -> Verdict {
    let games = s1_games(t, 100, 1007, "m");
    let report = evaluate(&games, &t.engine, &eval_config(1007)).unwrap();
    let curve = &model(&report, FULL).curve;
    let mut l2_violations = 0;
    let mut l2_tolerated = true;
    let mut acc_violations = 0;
    let mut acc_tolerated = true;
    for w in curve.windows(2) {
        if w[1].l2.mean > w[0].l2.mean {
            l2_violations += 1;
            l2_tolerated &= w[1].l2.mean - w[0].l2.mean <= w[1].l2.se.max(w[0].l2.se);
        }
        if w[1].accuracy.mean < w[0].accuracy.mean {
            acc_violations += 1;
            acc_tolerated &= w[0].accuracy.mean - w[1].accuracy.mean <= w[1].accuracy.se.max(w[0].accuracy.se);
        }
    }
    let first = &curve[0];
    let last = curve.last().unwrap();
    let pass = curve.len() == 5
        && l2_violations <= 1
        && l2_tolerated
        && acc_violations <= 1
        && acc_tolerated
        && last.l2.mean < first.l2.mean
        && last.accuracy.mean > first.accuracy.mean;
    let fmt = |f: &dyn Fn(&flightpref::eval::CurvePoint) -> f64| {
        curve.iter().map(|p| format!("{}:{:.3}", p.bin, f(p))).collect::<Vec<_>>().join(" ")
    };
    outcome(
        pass,
        format!("L2 {} | accuracy {}", fmt(&|p| p.l2.mean), fmt(&|p| p.accuracy.mean)),
    )
}

fn listener_top1(listener: &dyn Listener, games: &[GameRecord]) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for g in games {
        for r in &g.rounds {
            let best = optimal_option(&g.theta, &r.options);
            if best.ties.contains(&argmax(&listener.option_probs(&r.utterance, &r.options))) {
                hit += 1;
            }
            n += 1;
        }
    }
    hit as f64 / n as f64
}

fn known_action(t: &common::Trained) -> Verdict {
    let games = generate_games(
        &DatagenConfig {
            n_games: 200,
            seed: 1008,
            id_prefix: "k".into(),
            ..Default::default()
        },
        &t.grammar,
        None,
    )
    .unwrap();
    let clean = listener_top1(t.engine.listener().as_ref(), &games);
    let rate = (1.0 - 0.74 / clean).max(0.0);
    let noisy = NoisyListener::new(t.engine.listener().clone(), rate, 1008);
    let degraded = listener_top1(&noisy, &games);
    let engine = t.engine.with_listener(Arc::new(noisy));
    let report = known_action_ablation(&games, &engine, &eval_config(1008)).unwrap();
    let c = report.comparison(KNOWN_ACTION, FULL).unwrap();
    outcome(
        c.mean_difference > 0.0 && c.p_value < 0.05 && (degraded - 0.74).abs() < 0.03,
        format!(
            "listener top-1 {:.1}% clean, {:.1}% degraded; known-action minus full {:+.2} points (p={:.4})",
            100.0 * clean,
            100.0 * degraded,
            100.0 * c.mean_difference,
            c.p_value
        ),
    )
}

fn gaussianish(rng: &mut Rng, scale: f64) -> f64 {
    scale * ((0..4).map(|_| rng.unit()).sum::<f64>() - 2.0)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|x| x.abs()).fold(1e-8, f64::max);
    diff / scale
}

fn small_featurizer(grammar: &Arc<Grammar>, n: usize, rng: &mut Rng) -> (Featurizer, Vec<Utterance>) {
    let all = grammar.enumerate_utterances(2).unwrap();
    let utts: Vec<Utterance> = rng
        .choose_distinct(all.len(), n)
        .into_iter()
        .map(|i| all.as_slice()[i].clone())
        .collect();
    (Featurizer::build(grammar.clone(), utts.iter()), utts)
}

fn training(t: &common::Trained) -> Verdict {
    let grammar = &t.grammar;
    let mut rng = Rng::new(1009);
    let mut listener_err: f64 = 0.0;
    for _ in 0..50 {
        let (f, utts) = small_featurizer(grammar, 4, &mut rng);
        let data: Vec<ListenerExample> = (0..5)
            .map(|_| ListenerExample {
                encoding: f.encode(&utts[rng.index(utts.len())]),
                options: sample_option_set(&mut rng).features(),
                target: rng.index(NUM_OPTIONS),
            })
            .collect();
        let w: Vec<f64> = (0..ListenerParams::zeros(f.clone()).weights().len())
            .map(|_| gaussianish(&mut rng, 0.5))
            .collect();
        let (_, grad) = listener_loss_and_grad(&w, &data, 0.01);
        let numeric = central_difference(|x| listener_loss_and_grad(x, &data, 0.01).0, &w);
        listener_err = listener_err.max(relative_error(&grad, &numeric));
    }

    let mut speaker_err: f64 = 0.0;
    for _ in 0..50 {
        let (f, utts) = small_featurizer(grammar, 6, &mut rng);
        let encodings = utts.iter().map(|u| f.encode(u)).collect();
        let examples = (0..4)
            .map(|_| {
                let k = 2 + rng.index(4);
                let normalizer = rng.choose_distinct(utts.len(), k);
                let m = sample_option_set(&mut rng);
                SpeakerExample {
                    target: rng.index(k),
                    normalizer,
                    reward_input: reward_input(&sample_reward(&mut rng)),
                    action_input: action_input(&m.flights()[rng.index(3)], &m),
                }
            })
            .collect();
        let batch = SpeakerBatch { encodings, examples };
        let mut params = LatentParams::zeros(f.dim(), gaussianish(&mut rng, 1.0));
        params.reward.iter_mut().for_each(|w| *w = gaussianish(&mut rng, 0.5));
        params.action.iter_mut().for_each(|w| *w = gaussianish(&mut rng, 0.5));
        let tau = 0.5 + 4.0 * rng.unit();
        let (_, grad) = latent_loss_and_grad(&params, &batch, tau, 0.01);
        let numeric = central_difference(|x| latent_loss_and_grad(&params.unflatten(x), &batch, tau, 0.01).0, &params.flatten());
        speaker_err = speaker_err.max(relative_error(&grad.flatten(), &numeric));
    }

    let held_out = generate_games(
        &DatagenConfig {
            n_games: 200,
            seed: 1010,
            id_prefix: "h".into(),
            ..Default::default()
        },
        &t.grammar,
        None,
    )
    .unwrap();
    let top1 = listener_top1(t.engine.listener().as_ref(), &held_out);
    outcome(
        listener_err < 1e-5 && speaker_err < 1e-5 && top1 >= 0.9,
        format!(
            "gradient relative error: listener {listener_err:.1e}, speaker {speaker_err:.1e}; held-out listener top-1 {:.1}%",
            100.0 * top1
        ),
    )
}

fn accounting(t: &common::Trained) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let policy = AssistantPolicy::new(0.8, cfg(0.5)).unwrap();
    let mut rng = Rng::new(1011);
    let (mut bad_score, mut bad_replay) = (0, 0);
    let (mut correct, mut incorrect, mut asks) = (0, 0, 0);
    for g in 0..1000u64 {
        let id = format!("s{g}");
        let path = dir.path().join(format!("{id}.jsonl"));
        let theta = sample_reward(&mut rng);
        let mut session = Session::create(&id, theta, 20_000 + g, g % 3 == 0, policy, Some(path.clone())).unwrap();
        while session.state().phase != Phase::Finished {
            match session.state().phase {
                Phase::AwaitingUtterance(_) => {
                    let m: OptionSet = session.game().current_options().clone();
                    let u = synthetic_utterance(&SyntheticSpeaker::Scripted, &t.grammar, None, &theta, &m, &mut rng).unwrap();
                    session.submit_utterance(u.raw(), &t.engine).unwrap();
                }
                _ => {
                    session.assistant_action().unwrap();
                }
            }
        }
        let state = session.state();
        let (mut c, mut i, mut a) = (0i64, 0i64, 0i64);
        for r in &state.rounds {
            match (r.assistant_action, r.outcome) {
                (Some(AssistantAction::Chose(_)), Some(Outcome::Correct)) => c += 1,
                (Some(AssistantAction::Chose(_)), Some(Outcome::Incorrect)) => i += 1,
                (Some(AssistantAction::Asked), _) => a += 1,
                _ => {}
            }
        }
        if state.score != 25 * c - 100 * i - 20 * a {
            bad_score += 1;
        }
        correct += c;
        incorrect += i;
        asks += a;
        let replayed = Session::load(&path, &t.engine).unwrap();
        if serde_json::to_string(replayed.state()).unwrap() != serde_json::to_string(state).unwrap() {
            bad_replay += 1;
        }
    }
    outcome(
        bad_score == 0 && bad_replay == 0,
        format!(
            "1000 games ({correct} correct, {incorrect} incorrect, {asks} asks): {bad_score} score mismatches, {bad_replay} replay mismatches"
        ),
    )
}

fn main() {
    let start = Instant::now();
    let t = common::trained();
    println!("fixture models trained in {:.1}s", start.elapsed().as_secs_f64());

    type Check = fn(&common::Trained) -> Verdict;
    let checks: [(&str, Duration, Check); 9] = [
        ("marginalization identity", Duration::from_secs(60), marginalization),
        ("ablation equivalence", Duration::from_secs(300), ablation_equivalence),
        ("importance sampling vs exact", Duration::from_secs(1800), importance_sampling),
        ("oracle-k curve", Duration::from_secs(3600), |_| oracle_k()),
        ("full model vs ablations", Duration::from_secs(7200), full_vs_ablations),
        ("multi-turn trend", Duration::from_secs(3600), multi_turn),
        ("known-action ablation", Duration::from_secs(3600), known_action),
        ("training correctness", Duration::from_secs(1800), training),
        ("game accounting and replay", Duration::from_secs(600), accounting),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in checks.iter().enumerate() {
        let began = Instant::now();
        let result = check(t);
        let took = began.elapsed();
        let pass = result.pass && took <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} [{:.1}s of {}s]: {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
