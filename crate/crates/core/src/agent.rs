//! Episode loop: observe, sample candidates, decide, move.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, SamplingParams, TextBackend};
use crate::cot::{
    build_nav_prompt, extract_entities, parse_cot_with, render_history_lines, EntityExtractor, LabelError,
    ParseError, ParseMode, DEFAULT_EXAMPLE,
};
use crate::metrics::{evaluate, MetricRecord, MetricsConfig};
use crate::textualizer::{
    build_observation, CaptionProvider, DirectionThresholds, ObservationDescription, OptionKind, TextError,
    STOP_LETTER,
};
use crate::util::{mix_seed, str_seed};
use crate::verify::{
    prepare_masks, verify_step, Candidate, CandidateView, StepContext, VerificationTrace, VerifyConfig, VerifyError,
    DEFAULT_MASK_TOKEN,
};
use crate::world::{Episode, GraphRegistry, NavEdge, NavGraph, WorldError};

const NAV_STREAM: u64 = 0x4E41_5600;
const VERIFY_STREAM: u64 = 0x5645_5200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    Greedy,
    SampleVote,
    Verify,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntitySource {
    #[default]
    Lexicon,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub mode: DecisionMode,
    pub num_candidates: usize,
    pub verification_samples: usize,
    pub masked_entities: usize,
    pub max_steps: usize,
    pub sampling: SamplingParams,
    pub tfv_enabled: bool,
    pub mev_enabled: bool,
    pub parse_mode: ParseMode,
    pub candidate_view: CandidateView,
    pub mask_token: String,
    pub entity_source: EntitySource,
    pub example: String,
    pub thresholds: DirectionThresholds,
    pub metrics: MetricsConfig,
    pub seed: u64,
    pub concurrent_verification: bool,
    pub keep_transcripts: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            mode: DecisionMode::Verify,
            num_candidates: 4,
            verification_samples: 4,
            masked_entities: 2,
            max_steps: 15,
            sampling: SamplingParams::default(),
            tfv_enabled: true,
            mev_enabled: true,
            parse_mode: ParseMode::Lenient,
            candidate_view: CandidateView::FullCot,
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
            entity_source: EntitySource::Lexicon,
            example: DEFAULT_EXAMPLE.to_string(),
            thresholds: DirectionThresholds::default(),
            metrics: MetricsConfig::default(),
            seed: 0,
            concurrent_verification: false,
            keep_transcripts: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.num_candidates == 0 {
            return fail("num_candidates must be at least 1");
        }
        if self.verification_samples == 0 {
            return fail("verification_samples must be at least 1");
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1");
        }
        if self.mode == DecisionMode::Verify && !self.tfv_enabled && !self.mev_enabled {
            return fail("verify mode needs at least one of tfv_enabled, mev_enabled");
        }
        if self.mask_token.is_empty() {
            return fail("mask_token must not be empty");
        }
        self.sampling
            .validate()
            .map_err(|e| AgentError::Config(e.to_string()))
    }

    /// The configuration actually run: greedy decoding forces one
    /// temperature-zero candidate.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        if c.mode == DecisionMode::Greedy {
            c.num_candidates = 1;
            c.sampling.temperature = 0.0;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub sample: usize,
    pub error: ParseError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub viewpoint: String,
    pub observation: ObservationDescription,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<DroppedSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus: Option<char>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<VerificationTrace>,
    pub chosen: char,
    pub executed_edge: Option<NavEdge>,
    pub history_line: String,
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StopAction,
    MaxSteps,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub trajectory: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub terminated_by: Termination,
    pub metrics: Option<MetricRecord>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFailure {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Entities(#[from] LabelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("episode {id} is invalid: {reason}")]
    InvalidEpisode { id: String, reason: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("episode {} aborted after {} steps: {source}", partial.episode_id, partial.steps.len())]
    Aborted {
        partial: Box<EpisodeResult>,
        #[source]
        source: StepFailure,
    },
}

impl AgentError {
    pub fn partial(&self) -> Option<&EpisodeResult> {
        match self {
            Self::Aborted { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// `Step i. <option text>` lines for the executed moves; `none` when there are none.
pub fn render_history(steps: &[StepRecord]) -> String {
    let lines: Vec<&str> = steps
        .iter()
        .filter(|s| s.executed_edge.is_some())
        .map(|s| s.history_line.as_str())
        .collect();
    if lines.is_empty() {
        render_history_lines::<&str>(&[])
    } else {
        lines.join("\n")
    }
}

/// Most frequent action letter; ties go to the letter proposed first.
pub fn majority_vote(candidates: &[Candidate]) -> Option<char> {
    let mut counts: HashMap<char, usize> = HashMap::new();
    for c in candidates {
        *counts.entry(c.cot.action).or_default() += 1;
    }
    let mut best: Option<(char, usize)> = None;
    for c in candidates {
        let n = counts[&c.cot.action];
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((c.cot.action, n));
        }
    }
    best.map(|(l, _)| l)
}

struct Walker<'a> {
    graph: &'a NavGraph,
    episode: &'a Episode,
    config: AgentConfig,
    backend: &'a dyn TextBackend,
    captions: &'a dyn CaptionProvider,
    steps: Vec<StepRecord>,
    trajectory: Vec<String>,
}

impl Walker<'_> {
    fn abort(self, source: impl Into<StepFailure>) -> AgentError {
        AgentError::Aborted {
            partial: Box::new(EpisodeResult {
                episode_id: self.episode.id.clone(),
                trajectory: self.trajectory,
                steps: self.steps,
                terminated_by: Termination::Aborted,
                metrics: None,
            }),
            source: source.into(),
        }
    }

    fn finish(self, terminated_by: Termination) -> Result<EpisodeResult, AgentError> {
        let metrics = evaluate(self.graph, &self.trajectory, &self.episode.gt_path, &self.config.metrics)?;
        Ok(EpisodeResult {
            episode_id: self.episode.id.clone(),
            trajectory: self.trajectory,
            steps: self.steps,
            terminated_by,
            metrics: Some(metrics),
        })
    }
}

pub fn run_episode(
    graph: &NavGraph,
    episode: &Episode,
    config: &AgentConfig,
    backend: &dyn TextBackend,
    captions: &dyn CaptionProvider,
) -> Result<EpisodeResult, AgentError> {
    config.validate()?;
    episode.validate(graph).map_err(|reason| AgentError::InvalidEpisode {
        id: episode.id.clone(),
        reason,
    })?;
    let config = config.effective();
    let episode_key = str_seed(&episode.id);
    let mut w = Walker {
        graph,
        episode,
        config,
        backend,
        captions,
        steps: Vec::new(),
        trajectory: vec![episode.start.clone()],
    };

    let masks = if w.config.mode == DecisionMode::Verify && w.config.mev_enabled && w.config.masked_entities > 0 {
        let greedy = SamplingParams::greedy();
        let extractor = match w.config.entity_source {
            EntitySource::Lexicon => EntityExtractor::default(),
            EntitySource::Backend => EntityExtractor::Backend {
                backend: w.backend,
                params: greedy,
            },
        };
        let entities = match extract_entities(&episode.instruction, &extractor) {
            Ok(e) => e,
            Err(e) => return Err(w.abort(e)),
        };
        prepare_masks(&episode.instruction, w.config.masked_entities, &entities, &w.config.mask_token)
    } else {
        Vec::new()
    };

    let mut at = episode.start.clone();
    let mut heading = episode.start_heading;
    let mut elevation = 0.0;
    for t in 0..w.config.max_steps {
        let observation = build_observation(graph, &at, heading, elevation, w.captions, &w.config.thresholds)?;
        let history = render_history(&w.steps);
        let prompt = build_nav_prompt(&episode.instruction, &observation, &history, &w.config.example);
        let mut params = w.config.sampling;
        params.seed = Some(mix_seed(w.config.seed, &[episode_key, t as u64, NAV_STREAM]));
        let responses = match w.backend.generate_n(&prompt, w.config.num_candidates, &params) {
            Ok(r) => r,
            Err(e) => return Err(w.abort(e)),
        };

        let letters = observation.letters();
        let mut candidates = Vec::new();
        let mut dropped = Vec::new();
        for (sample, response) in responses.iter().enumerate() {
            match parse_cot_with(&response.text, &letters, w.config.parse_mode) {
                Ok(cot) => candidates.push(Candidate {
                    index: candidates.len(),
                    cot,
                }),
                Err(error) => {
                    log::debug!("episode {} step {t}: dropping sample {sample}: {error}", episode.id);
                    dropped.push(DroppedSample { sample, error });
                }
            }
        }

        let mut consensus = None;
        let mut traces = Vec::new();
        let degenerate = candidates.is_empty();
        let chosen = if degenerate {
            STOP_LETTER
        } else {
            match w.config.mode {
                DecisionMode::Greedy => candidates[0].cot.action,
                DecisionMode::SampleVote => majority_vote(&candidates).expect("non-empty"),
                DecisionMode::Verify => {
                    let context = StepContext {
                        instruction: &episode.instruction,
                        history: &history,
                        observation: &observation,
                    };
                    let mut sampling = w.config.sampling;
                    sampling.seed = Some(mix_seed(w.config.seed, &[episode_key, t as u64, VERIFY_STREAM]));
                    let verify = VerifyConfig {
                        samples: w.config.verification_samples,
                        tfv_enabled: w.config.tfv_enabled,
                        mev_enabled: w.config.mev_enabled,
                        view: w.config.candidate_view,
                        sampling,
                        concurrent: w.config.concurrent_verification,
                        keep_transcripts: w.config.keep_transcripts,
                    };
                    match verify_step(&candidates, &context, &masks, &verify, w.backend) {
                        Ok(verdict) => {
                            consensus = verdict.consensus;
                            traces = verdict.traces;
                            candidates[verdict.chosen].cot.action
                        }
                        Err(e) => return Err(w.abort(e)),
                    }
                }
            }
        };

        let option = observation.option(chosen).expect("chosen letter was validated").clone();
        let executed_edge = match option.kind {
            OptionKind::Stop => None,
            OptionKind::Move => option.edge.clone(),
        };
        let executed_count = w.steps.iter().filter(|s| s.executed_edge.is_some()).count();
        let history_line = format!("Step {}. {}", executed_count + 1, option.text);
        w.steps.push(StepRecord {
            t,
            viewpoint: at.clone(),
            observation,
            candidates,
            dropped,
            consensus,
            traces,
            chosen,
            executed_edge: executed_edge.clone(),
            history_line,
            degenerate,
        });

        let Some(edge) = executed_edge else {
            return w.finish(Termination::StopAction);
        };
        at = edge.to.clone();
        heading = edge.heading;
        elevation = if option.direction.is_some_and(|d| d.is_vertical()) {
            edge.elevation
        } else {
            0.0
        };
        w.trajectory.push(at.clone());
    }
    w.finish(Termination::MaxSteps)
}

/// Runs every episode, keeping input order. `jobs <= 1` runs sequentially.
pub fn run_split(
    registry: &GraphRegistry,
    episodes: &[Episode],
    config: &AgentConfig,
    backend: &dyn TextBackend,
    captions: &dyn CaptionProvider,
    jobs: usize,
) -> Vec<Result<EpisodeResult, AgentError>> {
    let one = |episode: &Episode| {
        let graph = registry.graph_for(episode)?;
        run_episode(graph, episode, config, backend, captions)
    };
    if jobs <= 1 {
        return episodes.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| episodes.par_iter().map(one).collect()),
        Err(e) => {
            log::warn!("cannot start {jobs} workers ({e}); running sequentially");
            episodes.iter().map(one).collect()
        }
    }
}
