use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::Arc;

use anyhow::{bail, Context};
use flightpref::eval::{evaluate as run_evaluation, oracle_k_curve, EvalConfig};
use flightpref::game::{
    game_reward, games_from_corpus, generate_corpus, play_game, AssistantPolicy, DatagenConfig, ScoreTally,
    SyntheticSpeaker,
};
use flightpref::models::{train_bundle, TrainConfig};
use flightpref::pragmatics::{Beta, Pragmatics};
use flightpref::rng::derive_seed;
use flightpref::{ingest_corpus, Grammar, Rng};
use log::{info, warn};

use crate::cli::{DatagenArgs, EvaluateArgs, PolicyArgs, SimulateArgs, SpeakerKind, TrainArgs};
use crate::load_engine;

pub fn speaker(kind: SpeakerKind, alpha: f64) -> SyntheticSpeaker {
    match kind {
        SpeakerKind::Heuristic => SyntheticSpeaker::heuristic(),
        SpeakerKind::Scripted => SyntheticSpeaker::Scripted,
        SpeakerKind::S1 => SyntheticSpeaker::S1Sampler {
            alpha,
            beta: Beta::Infinite,
        },
    }
}

pub fn policy(args: &PolicyArgs) -> anyhow::Result<AssistantPolicy> {
    Ok(AssistantPolicy::new(args.threshold, args.inference.config()?)?)
}

fn ingest(path: &std::path::Path) -> anyhow::Result<flightpref::Corpus> {
    let ingested = ingest_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    for r in &ingested.rejected {
        warn!("{}:{}: skipped row: {}", path.display(), r.line, r.reason);
    }
    Ok(ingested.corpus)
}

pub fn datagen(args: &DatagenArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let speaker = speaker(args.speaker, args.speaker_alpha);
    let (engine, grammar): (Option<Arc<Pragmatics>>, Arc<Grammar>) = match (&args.models, speaker.needs_models()) {
        (Some(path), _) => {
            let (engine, grammar) = load_engine(path)?;
            (Some(engine), grammar)
        }
        (None, true) => bail!("--speaker s1 needs --models"),
        (None, false) => (None, Arc::new(Grammar::default_v1())),
    };
    let cfg = DatagenConfig {
        n_games: args.games,
        rounds: args.rounds,
        speaker,
        seed,
        id_prefix: args.id_prefix.clone(),
    };
    let corpus = generate_corpus(&cfg, &grammar, engine.as_deref())?;
    corpus.save(&args.out)?;
    writeln!(out, "wrote {} rows from {} games to {}", corpus.len(), args.games, args.out.display())?;
    Ok(())
}

pub fn train(args: &TrainArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let corpus = ingest(&args.corpus)?;
    if corpus.is_empty() {
        bail!("corpus {} has no usable rows", args.corpus.display());
    }
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    let grammar = Arc::new(Grammar::default_v1());
    let (bundle, report) = train_bundle(&corpus, grammar, &cfg, args.members)?;
    bundle.save(&args.out)?;
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    for (i, l) in report.listeners.iter().enumerate() {
        writeln!(
            out,
            "listener {i}: train accuracy {:.3}, validation accuracy {}",
            l.train_accuracy,
            l.validation_accuracy.map_or("n/a".to_string(), |a| format!("{a:.3}"))
        )?;
    }
    writeln!(out, "saved models to {}", args.out.display())?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let (engine, _) = load_engine(&args.models)?;
    let games = games_from_corpus(&ingest(&args.corpus)?);
    let pcfg = args.inference.config()?;
    let cfg = EvalConfig {
        seed,
        n_sets: args.sets,
        alpha: pcfg.alpha,
        beta: pcfg.beta,
        inference: pcfg.inference,
        bootstrap_resamples: args.resamples,
    };
    info!("evaluating {} games", games.len());
    let mut report = run_evaluation(&games, &engine, &cfg)?;
    if args.oracle_thetas > 0 {
        report.oracle_k = oracle_k_curve(args.oracle_thetas, args.sets, seed);
    }
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_json())?;
    }
    if let Some(path) = &args.curves {
        std::fs::write(path, report.curves_csv())?;
    }
    write!(out, "{}", report.to_table())?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let (engine, grammar) = load_engine(&args.models)?;
    let policy = policy(&args.policy)?;
    let speaker = speaker(args.speaker, args.speaker_alpha);
    let mut states = match &args.out {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let (mut total, mut tally) = (0i64, ScoreTally::default());
    for g in 0..args.games {
        let game_seed = derive_seed(seed, g as u64);
        let mut rng = Rng::new(derive_seed(game_seed, 1));
        let game = play_game(
            &format!("sim{g}"),
            game_reward(game_seed),
            game_seed,
            &policy,
            &engine,
            &speaker,
            &grammar,
            &mut rng,
        )?;
        let state = game.state();
        let t = ScoreTally::of(state);
        tally.correct += t.correct;
        tally.incorrect += t.incorrect;
        tally.asks += t.asks;
        total += state.score;
        if let Some(w) = states.as_mut() {
            serde_json::to_writer(&mut *w, state)?;
            writeln!(w)?;
        }
    }
    if let Some(mut w) = states {
        w.flush()?;
    }
    let n = args.games.max(1) as f64;
    writeln!(
        out,
        "{} games: mean score {:.2}; {} correct, {} incorrect, {} asks",
        args.games,
        total as f64 / n,
        tally.correct,
        tally.incorrect,
        tally.asks
    )?;
    Ok(())
}
