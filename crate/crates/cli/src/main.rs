use std::io::Write;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use flightpref::game::{game_reward, Session, SessionStore};
use flightpref::rng::derive_seed;
use flightpref_cli::cli::{Cli, Command};
use flightpref_cli::{commands, http, load_engine, play};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Datagen(a) => commands::datagen(&a, seed, &mut out),
        Command::Train(a) => commands::train(&a, seed, &mut out),
        Command::Evaluate(a) => commands::evaluate(&a, seed, &mut out),
        Command::Simulate(a) => commands::simulate(&a, seed, &mut out),
        Command::Play(a) => {
            let (engine, _) = load_engine(&a.models)?;
            let policy = commands::policy(&a.policy)?;
            let game_seed = derive_seed(seed, 0);
            let mut session = Session::create("play", game_reward(game_seed), game_seed, a.demonstration, policy, a.log.clone())?;
            let stdin = std::io::stdin();
            play::play(&mut session, &engine, &mut stdin.lock(), &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Serve(a) => {
            let (engine, _) = load_engine(&a.models)?;
            let policy = commands::policy(&a.policy)?;
            let store = SessionStore::open(engine, policy, Some(a.sessions.clone()), seed)
                .with_context(|| format!("opening sessions in {}", a.sessions.display()))?;
            log::info!("{} sessions resumed", store.len());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(http::serve(Arc::new(store), a.static_dir.clone(), a.addr))
        }
    }
}
