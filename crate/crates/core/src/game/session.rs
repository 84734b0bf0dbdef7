//! Sessions backed by an append-only JSONL event log, and a directory-backed
//! store that resumes every logged session on startup.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::domain::{sample_reward, RewardVector, SCHEMA_VERSION};
use crate::lang::Utterance;
use crate::pragmatics::{PosteriorSnapshot, Pragmatics};
use crate::rng::{derive_seed, mix64, Rng};

use super::state::{ActionResult, AssistantPolicy, Game, GameState, Phase};
use super::GameError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        v: String,
        session_id: String,
        theta: RewardVector,
        seed: u64,
        demonstration: bool,
        policy: AssistantPolicy,
    },
    Utterance {
        text: String,
    },
    AssistantAction {
        result: ActionResult,
    },
}

/// Response to a submitted utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResponse {
    pub posterior: PosteriorSnapshot,
    /// The assistant's turn taken right after the utterance, if any.
    pub assistant: Option<ActionResult>,
    pub state: GameState,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    game: Game,
    policy: AssistantPolicy,
    log: Option<PathBuf>,
}

impl Session {
    pub fn create(
        id: impl Into<String>,
        theta: RewardVector,
        seed: u64,
        demonstration: bool,
        policy: AssistantPolicy,
        log: Option<PathBuf>,
    ) -> Result<Self, GameError> {
        let id = id.into();
        let session = Self {
            game: Game::new(id.clone(), theta, seed, demonstration),
            id: id.clone(),
            policy,
            log,
        };
        if let Some(path) = &session.log {
            if path.exists() {
                return Err(GameError::SessionExists(id));
            }
        }
        session.append(&SessionEvent::Created {
            v: SCHEMA_VERSION.to_string(),
            session_id: id,
            theta,
            seed,
            demonstration,
            policy,
        })?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn state(&self) -> &GameState {
        self.game.state()
    }

    pub fn policy(&self) -> &AssistantPolicy {
        &self.policy
    }

    fn append(&self, event: &SessionEvent) -> Result<(), GameError> {
        if let Some(path) = &self.log {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(event)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    /// Records the utterance, updates the posterior and, when the assistant
    /// is up next, lets it act once.
    pub fn submit_utterance(&mut self, text: &str, engine: &Pragmatics) -> Result<UtteranceResponse, GameError> {
        let u = Utterance::new(text);
        self.game.submit_utterance(u, engine, &self.policy)?;
        self.append(&SessionEvent::Utterance { text: text.to_string() })?;
        let assistant = if self.game.state().phase == Phase::AwaitingAssistant {
            Some(self.assistant_action()?)
        } else {
            None
        };
        Ok(UtteranceResponse {
            posterior: self.game.state().posterior.clone(),
            assistant,
            state: self.game.state().clone(),
        })
    }

    pub fn assistant_action(&mut self) -> Result<ActionResult, GameError> {
        let result = self.game.assistant_act(&self.policy)?;
        self.append(&SessionEvent::AssistantAction { result: result.clone() })?;
        Ok(result)
    }

    /// Rebuilds a session from its events. Recorded assistant results must
    /// match the recomputed ones.
    pub fn replay(events: &[SessionEvent], engine: &Pragmatics, log: Option<PathBuf>) -> Result<Self, GameError> {
        let (first, rest) = events.split_first().ok_or(GameError::Replay("empty log".into()))?;
        let SessionEvent::Created {
            v,
            session_id,
            theta,
            seed,
            demonstration,
            policy,
        } = first
        else {
            return Err(GameError::Replay("log does not start with a created event".into()));
        };
        if v != SCHEMA_VERSION {
            return Err(GameError::Replay(format!("unsupported log version `{v}`")));
        }
        let mut session = Self {
            id: session_id.clone(),
            game: Game::new(session_id.clone(), *theta, *seed, *demonstration),
            policy: *policy,
            log: None,
        };
        for (i, event) in rest.iter().enumerate() {
            match event {
                SessionEvent::Created { .. } => {
                    return Err(GameError::Replay(format!("event {}: duplicate created event", i + 2)));
                }
                SessionEvent::Utterance { text } => {
                    session.game.submit_utterance(Utterance::new(text.as_str()), engine, &session.policy)?;
                }
                SessionEvent::AssistantAction { result } => {
                    let again = session.game.assistant_act(&session.policy)?;
                    if &again != result {
                        return Err(GameError::Replay(format!(
                            "event {}: assistant action differs on replay",
                            i + 2
                        )));
                    }
                }
            }
        }
        session.log = log;
        Ok(session)
    }

    pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, GameError> {
        let reader = BufReader::new(File::open(path)?);
        let mut events = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(
                serde_json::from_str(&line)
                    .map_err(|e| GameError::Replay(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
        Ok(events)
    }

    pub fn load(path: &Path, engine: &Pragmatics) -> Result<Self, GameError> {
        Self::replay(&Self::read_log(path)?, engine, Some(path.to_path_buf()))
    }
}

/// Parameters for a new session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub seed: Option<u64>,
    pub theta: Option<RewardVector>,
    pub demonstration: bool,
    pub threshold: Option<f64>,
}

/// All live sessions. Each session sits behind its own lock, so requests to
/// one session are serialized while different sessions proceed
/// independently.
pub struct SessionStore {
    engine: Arc<Pragmatics>,
    policy: AssistantPolicy,
    dir: Option<PathBuf>,
    seed: u64,
    counter: AtomicU64,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// Opens a store; with a directory, every `*.jsonl` log in it is
    /// replayed.
    pub fn open(
        engine: Arc<Pragmatics>,
        policy: AssistantPolicy,
        dir: Option<PathBuf>,
        seed: u64,
    ) -> Result<Self, GameError> {
        let mut sessions = BTreeMap::new();
        if let Some(dir) = &dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            paths.sort();
            for path in paths {
                let session = Session::load(&path, &engine)?;
                sessions.insert(session.id().to_string(), Arc::new(Mutex::new(session)));
            }
        }
        Ok(Self {
            engine,
            policy,
            dir,
            seed,
            counter: AtomicU64::new(sessions.len() as u64),
            sessions: Mutex::new(sessions),
        })
    }

    pub fn engine(&self) -> &Arc<Pragmatics> {
        &self.engine
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.lock().expect("store lock").keys().cloned().collect()
    }

    pub fn create(&self, req: &CreateSession) -> Result<String, GameError> {
        let mut policy = self.policy;
        if let Some(t) = req.threshold {
            policy = AssistantPolicy::new(t, policy.cfg)?;
        }
        let mut sessions = self.sessions.lock().expect("store lock");
        let (id, seed) = loop {
            let n = self.counter.fetch_add(1, Ordering::SeqCst);
            let seed = req.seed.unwrap_or_else(|| derive_seed(self.seed, n));
            let id = format!("s{:012x}", mix64(seed ^ n.rotate_left(32)) & 0xffff_ffff_ffff);
            if !sessions.contains_key(&id) {
                break (id, seed);
            }
        };
        let theta = req
            .theta
            .unwrap_or_else(|| sample_reward(&mut Rng::new(derive_seed(seed, 0x7e7a))));
        let log = self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
        let session = Session::create(id.clone(), theta, seed, req.demonstration, policy, log)?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, GameError> {
        self.sessions
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| GameError::UnknownSession(id.to_string()))
    }

    /// Runs `f` with exclusive access to one session.
    pub fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session, &Pragmatics) -> Result<T, GameError>,
    ) -> Result<T, GameError> {
        let handle = self.get(id)?;
        let mut session = handle.lock().map_err(|_| GameError::Poisoned(id.to_string()))?;
        f(&mut session, &self.engine)
    }
}
