//! Command-line front end: `run`, `sweep`, `labels`, `synth`, and `score`.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{cmd_labels, cmd_run, cmd_score, cmd_sweep, cmd_synth, RunOutcome, SweepCell};
pub use config::{build_backend, parse_synth_spec, Dataset, RunConfig};

use crate::agent::DecisionMode;
use crate::backend::BackendError;
use crate::cot::ParseMode;
use crate::verify::CandidateView;
use crate::world::GraphFormat;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{}: {message}", path.display())]
    Output { path: PathBuf, message: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub(crate) fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Input {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub(crate) fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Output {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Input { .. } => "input",
            Self::Backend(_) => "backend",
            Self::Output { .. } => "output",
            Self::Run(_) => "run",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Run(_) => 1,
            Self::Config(_) => 2,
            Self::Input { .. } => 3,
            Self::Backend(_) => 4,
            Self::Output { .. } => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "navverify", version, about = "Generate-then-verify instruction-following navigation")]
pub struct Cli {
    /// Log filter, e.g. `info` or `navverify=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an agent over a split and write per-episode traces plus a summary.
    Run(RunArgs),
    /// Evaluate every (K, P) combination and tabulate the results.
    Sweep(SweepArgs),
    /// Convert ground-truth trajectories into training records.
    Labels(LabelArgs),
    /// Generate a synthetic world: graph, captions, and episodes.
    Synth(SynthArgs),
    /// Re-aggregate (and optionally recompute) metrics from trace files.
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Vote,
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Native,
    Matterport,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Graph file as PATH or SCAN=PATH (repeatable).
    #[arg(long = "graph", value_name = "[SCAN=]PATH")]
    pub graphs: Vec<String>,
    #[arg(long, value_enum)]
    pub graph_format: Option<FormatArg>,
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// In-memory synthetic world (repeatable).
    #[arg(long, value_name = "SEED:VIEWPOINTS:BRANCHING:EPISODES")]
    pub synth: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AgentArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Candidates sampled per step.
    #[arg(short = 'k', long)]
    pub candidates: Option<usize>,
    /// Verification samples per query.
    #[arg(short = 'p', long)]
    pub samples: Option<usize>,
    /// Entities masked for masked-entity verification.
    #[arg(short = 'r', long)]
    pub masked: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    #[arg(long)]
    pub no_tfv: bool,
    #[arg(long)]
    pub no_mev: bool,
    /// Reject navigation outputs that drift from the exact field labels.
    #[arg(long)]
    pub strict: bool,
    /// Show verifiers only the candidate's action, not its prediction.
    #[arg(long)]
    pub action_only: bool,
    #[arg(long)]
    pub mask_token: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// `simulated`, `scripted:PATH`, `http`, or `http:URL`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
    pub k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
    pub p_values: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub viewpoints: usize,
    #[arg(long, default_value_t = 3)]
    pub branching: usize,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Number of worlds, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub worlds: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Directory of trace files.
    pub traces: PathBuf,
    /// Graphs to recompute metrics from trajectories (optional).
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Layers flags over the optional config file.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.data.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        apply_data(&mut c, &self.data);
        let a = &self.agent;
        if let Some(mode) = a.mode {
            c.agent.mode = match mode {
                ModeArg::Greedy => DecisionMode::Greedy,
                ModeArg::Vote => DecisionMode::SampleVote,
                ModeArg::Verify => DecisionMode::Verify,
            };
        }
        set(&mut c.agent.num_candidates, a.candidates);
        set(&mut c.agent.verification_samples, a.samples);
        set(&mut c.agent.masked_entities, a.masked);
        set(&mut c.agent.max_steps, a.max_steps);
        set(&mut c.agent.seed, a.seed);
        set(&mut c.agent.sampling.temperature, a.temperature);
        set(&mut c.agent.sampling.top_p, a.top_p);
        set(&mut c.agent.sampling.max_new_tokens, a.max_new_tokens);
        set(&mut c.agent.mask_token, a.mask_token.clone());
        if a.no_tfv {
            c.agent.tfv_enabled = false;
        }
        if a.no_mev {
            c.agent.mev_enabled = false;
        }
        if a.strict {
            c.agent.parse_mode = ParseMode::Strict;
        }
        if a.action_only {
            c.agent.candidate_view = CandidateView::ActionOnly;
        }
        let b = &self.backend;
        set(&mut c.backend, b.backend.clone().map(Some));
        set(&mut c.http.model, b.model.clone());
        set(&mut c.http.api_key_env, b.api_key_env.clone());
        set(&mut c.out, self.out.clone().map(Some));
        set(&mut c.jobs, self.jobs);
        c.agent.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

impl DataArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        apply_data(&mut c, self);
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_data(c: &mut RunConfig, d: &DataArgs) {
    if !d.graphs.is_empty() {
        c.graphs = d.graphs.clone();
    }
    if !d.synth.is_empty() {
        c.synth = d.synth.clone();
    }
    if let Some(f) = d.graph_format {
        c.graph_format = match f {
            FormatArg::Native => GraphFormat::Native,
            FormatArg::Matterport => GraphFormat::MatterportConnectivity,
        };
    }
    set(&mut c.episodes, d.episodes.clone().map(Some));
    set(&mut c.captions, d.captions.clone().map(Some));
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    dispatch(&cli)
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => {
            let outcome = cmd_run(&args.resolve()?)?;
            print!("{}", outcome.table);
            Ok(())
        }
        Command::Sweep(args) => {
            let config = args.run.resolve()?;
            let (_, table) = cmd_sweep(&config, &args.k_values, &args.p_values)?;
            print!("{table}");
            Ok(())
        }
        Command::Labels(args) => {
            let n = cmd_labels(&args.data.resolve()?, &args.out)?;
            println!("wrote {n} training records to {}", args.out.display());
            Ok(())
        }
        Command::Synth(args) => {
            let files = cmd_synth(args)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Score(args) => {
            let graphs = if args.data.graphs.is_empty() && args.data.synth.is_empty() && args.data.config.is_none() {
                None
            } else {
                Some(args.data.resolve()?)
            };
            let table = cmd_score(&args.traces, graphs.as_ref(), args.out.as_deref())?;
            print!("{table}");
            Ok(())
        }
    }
}
