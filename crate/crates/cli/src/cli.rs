use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flightpref::pragmatics::{Beta, Inference, PragmaticsConfig, Proposal};

#[derive(Debug, Parser)]
#[command(name = "flightpref", version, about = "Reward inference from language in a flight booking game")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of games.
    Datagen(DatagenArgs),
    /// Train base listener and speaker models on a corpus.
    Train(TrainArgs),
    /// Score the full model, its ablations and oracle baselines on a corpus.
    Evaluate(EvaluateArgs),
    /// Play closed-loop games between a synthetic user and the assistant.
    Simulate(SimulateArgs),
    /// Play a game in the terminal as the user.
    Play(PlayArgs),
    /// Run the HTTP game service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpeakerKind {
    /// Rule-based user mixing reward and option descriptions (no models needed).
    Heuristic,
    /// Names the largest reward weight.
    Scripted,
    /// Samples from the pragmatic speaker (needs --models).
    S1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InferenceKind {
    Exact,
    Importance,
}

#[derive(Debug, Clone, Args)]
pub struct InferenceArgs {
    /// Nearsightedness: weight of the action-describing speaker.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Speaker rationality about the referenced option ("inf" for argmax).
    #[arg(long, default_value = "inf")]
    pub beta: Beta,
    /// Posterior update method.
    #[arg(long, value_enum, default_value_t = InferenceKind::Exact)]
    pub inference: InferenceKind,
    /// Samples per update when --inference importance.
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
}

impl InferenceArgs {
    pub fn config(&self) -> anyhow::Result<PragmaticsConfig> {
        let inference = match self.inference {
            InferenceKind::Exact => Inference::Exact,
            InferenceKind::Importance => Inference::Importance {
                n_samples: self.samples,
                proposal: Proposal::Prior,
            },
        };
        Ok(PragmaticsConfig::new(self.alpha, self.beta, inference)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DatagenArgs {
    /// Output corpus (JSONL).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of games.
    #[arg(long, default_value_t = 200)]
    pub games: usize,
    /// Rounds per game.
    #[arg(long, default_value_t = 6)]
    pub rounds: usize,
    /// Synthetic user.
    #[arg(long, value_enum, default_value_t = SpeakerKind::Heuristic)]
    pub speaker: SpeakerKind,
    /// Trained models, required by --speaker s1.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Alpha of the s1 speaker.
    #[arg(long, default_value_t = 0.5)]
    pub speaker_alpha: f64,
    /// Prefix of generated game ids.
    #[arg(long, default_value = "g")]
    pub id_prefix: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output model bundle (JSON).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Training config (TOML); defaults apply to omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ensemble size for listener and reward speaker.
    #[arg(long, default_value_t = 1)]
    pub members: usize,
    /// Write the training report (JSON) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Evaluation corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Trained model bundle.
    #[arg(long)]
    pub models: PathBuf,
    /// Held-out option sets per game.
    #[arg(long, default_value_t = 1000)]
    pub sets: usize,
    /// Bootstrap resamples for significance tests.
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    /// Rewards sampled for the oracle-k baselines (0 skips them).
    #[arg(long, default_value_t = 500)]
    pub oracle_thetas: usize,
    /// Write the full report (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-round curves (CSV) here.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Choose when the best option's optimality probability reaches this; 1 always asks.
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Trained model bundle.
    #[arg(long)]
    pub models: PathBuf,
    /// Number of games.
    #[arg(long, default_value_t = 100)]
    pub games: usize,
    /// Synthetic user.
    #[arg(long, value_enum, default_value_t = SpeakerKind::S1)]
    pub speaker: SpeakerKind,
    /// Alpha of the s1 speaker.
    #[arg(long, default_value_t = 0.5)]
    pub speaker_alpha: f64,
    /// Write final game states (JSONL) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PlayArgs {
    /// Trained model bundle.
    #[arg(long)]
    pub models: PathBuf,
    /// Reveal the correct flight to the engine after a wrong choice.
    #[arg(long)]
    pub demonstration: bool,
    /// Session log (JSONL) to write.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Trained model bundle.
    #[arg(long)]
    pub models: PathBuf,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory of session logs; existing sessions are resumed.
    #[arg(long, default_value = "sessions")]
    pub sessions: PathBuf,
    /// Directory of static UI assets served at /.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}
