//! Dual verification of sampled candidates: true/false judgments plus
//! masked-entity recovery, summed into one score per candidate.

mod prompts;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{
    build_mev_prompt, build_tfv_prompt, entity_match, mev_answer, parse_tfv, prepare_masks, CandidateView,
    MaskedInstruction, TfvReading, DEFAULT_MASK_TOKEN, MEV_HEADER, TFV_HEADER,
};

use crate::backend::{BackendError, SamplingParams, TextBackend};
use crate::cot::CotTriple;
use crate::textualizer::ObservationDescription;
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub cot: CotTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Tfv,
    Mev,
}

impl Channel {
    fn code(self) -> u64 {
        match self {
            Self::Tfv => 1,
            Self::Mev => 2,
        }
    }
}

/// One verification prompt and its `P` responses in sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTranscript {
    pub channel: Channel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub prompt: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationTrace {
    pub candidate_index: usize,
    pub tfv_outcomes: Vec<bool>,
    /// Parallel to `tfv_outcomes`: responses that were neither true nor false.
    pub tfv_unparsed: Vec<bool>,
    /// `mev_outcomes[r][p]`.
    pub mev_outcomes: Vec<Vec<bool>>,
    pub tfv_score: usize,
    pub mev_score: usize,
    pub total: usize,
    /// Set when the candidate duplicates an earlier one and inherits its scores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shared_with: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<QueryTranscript>,
}

impl VerificationTrace {
    pub fn from_outcomes(candidate_index: usize, tfv: Vec<bool>, mev: Vec<Vec<bool>>) -> Self {
        let tfv_score = tfv.iter().filter(|&&b| b).count();
        let mev_score = mev.iter().flatten().filter(|&&b| b).count();
        Self {
            candidate_index,
            tfv_unparsed: vec![false; tfv.len()],
            tfv_outcomes: tfv,
            mev_outcomes: mev,
            tfv_score,
            mev_score,
            total: tfv_score + mev_score,
            shared_with: None,
            transcripts: Vec::new(),
        }
    }

    /// True when the stored scores agree with the raw outcome lists.
    pub fn is_consistent(&self) -> bool {
        let recomputed = Self::from_outcomes(self.candidate_index, self.tfv_outcomes.clone(), self.mev_outcomes.clone());
        recomputed.tfv_score == self.tfv_score
            && recomputed.mev_score == self.mev_score
            && self.total == self.tfv_score + self.mev_score
            && self.tfv_unparsed.len() == self.tfv_outcomes.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("{channel:?} query (r={r:?}, p={p}) failed: {source}")]
    Query {
        channel: Channel,
        r: Option<usize>,
        p: usize,
        #[source]
        source: BackendError,
    },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("{candidates} candidates but {traces} traces")]
    Misaligned { candidates: usize, traces: usize },
    #[error("P must be at least 1")]
    ZeroSamples,
}

/// Everything the verifier conditions on at one timestep.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub instruction: &'a str,
    pub history: &'a str,
    pub observation: &'a ObservationDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub samples: usize,
    pub tfv_enabled: bool,
    pub mev_enabled: bool,
    pub view: CandidateView,
    pub sampling: SamplingParams,
    /// Verify distinct candidates on the rayon pool instead of in order.
    pub concurrent: bool,
    pub keep_transcripts: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 4,
            tfv_enabled: true,
            mev_enabled: true,
            view: CandidateView::FullCot,
            sampling: SamplingParams::default(),
            concurrent: false,
            keep_transcripts: true,
        }
    }
}

fn query(
    backend: &dyn TextBackend,
    prompt: &str,
    config: &VerifyConfig,
    coords: (usize, Channel, Option<usize>),
) -> Result<Vec<String>, VerifyError> {
    let (candidate, channel, r) = coords;
    let mut params = config.sampling;
    if let Some(base) = params.seed {
        let r_code = r.map_or(0, |r| r as u64 + 1);
        params.seed = Some(mix_seed(base, &[candidate as u64, channel.code(), r_code]));
    }
    backend
        .generate_n(prompt, config.samples, &params)
        .map(|responses| responses.into_iter().map(|r| r.text).collect())
        .map_err(|e| {
            let (p, source) = match e {
                BackendError::BatchFailed { index, source } => (index, *source),
                other => (0, other),
            };
            VerifyError::Query { channel, r, p, source }
        })
}

/// Issues `P` true/false queries and `R·P` masked-entity queries for one
/// candidate and aggregates them into a trace.
pub fn score_candidate(
    candidate: &Candidate,
    context: &StepContext<'_>,
    masks: &[MaskedInstruction],
    config: &VerifyConfig,
    backend: &dyn TextBackend,
) -> Result<VerificationTrace, VerifyError> {
    if config.samples == 0 {
        return Err(VerifyError::ZeroSamples);
    }
    let mut transcripts = Vec::new();
    let (mut tfv, mut unparsed) = (Vec::new(), Vec::new());
    if config.tfv_enabled {
        let prompt = build_tfv_prompt(context.instruction, context.history, context.observation, candidate, config.view);
        let responses = query(backend, &prompt, config, (candidate.index, Channel::Tfv, None))?;
        for response in &responses {
            let reading = parse_tfv(response);
            tfv.push(reading.value);
            unparsed.push(reading.unparsed);
        }
        transcripts.push(QueryTranscript {
            channel: Channel::Tfv,
            r: None,
            prompt,
            responses,
        });
    }
    let mut mev = Vec::new();
    if config.mev_enabled {
        for (r, masked) in masks.iter().enumerate() {
            let prompt = build_mev_prompt(masked, context.history, context.observation, candidate, config.view);
            let responses = query(backend, &prompt, config, (candidate.index, Channel::Mev, Some(r)))?;
            mev.push(
                responses
                    .iter()
                    .map(|resp| entity_match(mev_answer(resp), &masked.masked_entity))
                    .collect(),
            );
            transcripts.push(QueryTranscript {
                channel: Channel::Mev,
                r: Some(r),
                prompt,
                responses,
            });
        }
    }
    let mut trace = VerificationTrace::from_outcomes(candidate.index, tfv, mev);
    trace.tfv_unparsed = unparsed;
    if config.keep_transcripts {
        trace.transcripts = transcripts;
    }
    Ok(trace)
}

/// Highest total; ties go to the higher TFV score, then the lower index.
pub fn select_action<'c>(
    candidates: &'c [Candidate],
    traces: &[VerificationTrace],
) -> Result<&'c Candidate, VerifyError> {
    if candidates.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    if candidates.len() != traces.len() {
        return Err(VerifyError::Misaligned {
            candidates: candidates.len(),
            traces: traces.len(),
        });
    }
    let best = candidates
        .iter()
        .zip(traces)
        .max_by(|(ca, ta), (cb, tb)| {
            ta.total
                .cmp(&tb.total)
                .then(ta.tfv_score.cmp(&tb.tfv_score))
                .then(cb.index.cmp(&ca.index))
        })
        .map(|(c, _)| c)
        .expect("non-empty");
    Ok(best)
}

/// The shared action letter when every candidate proposes the same action.
pub fn consensus_check(candidates: &[Candidate]) -> Option<char> {
    let first = candidates.first()?.cot.action;
    candidates.iter().all(|c| c.cot.action == first).then_some(first)
}

/// Result of one verified decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub consensus: Option<char>,
    pub traces: Vec<VerificationTrace>,
    pub chosen: usize,
}

/// Consensus shortcut, otherwise verification of every distinct candidate
/// and argmax selection. `chosen` is a position in `candidates`.
pub fn verify_step(
    candidates: &[Candidate],
    context: &StepContext<'_>,
    masks: &[MaskedInstruction],
    config: &VerifyConfig,
    backend: &dyn TextBackend,
) -> Result<StepVerdict, VerifyError> {
    if candidates.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    if let Some(letter) = consensus_check(candidates) {
        return Ok(StepVerdict {
            consensus: Some(letter),
            traces: Vec::new(),
            chosen: 0,
        });
    }

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let owners: Vec<usize> = candidates
        .iter()
        .enumerate()
        .map(|(pos, c)| *first_seen.entry(c.cot.raw.as_str()).or_insert(pos))
        .collect();
    let distinct: Vec<usize> = (0..candidates.len()).filter(|&pos| owners[pos] == pos).collect();

    let score = |&pos: &usize| score_candidate(&candidates[pos], context, masks, config, backend);
    let scored: Vec<VerificationTrace> = if config.concurrent {
        distinct.par_iter().map(score).collect::<Result<_, _>>()?
    } else {
        distinct.iter().map(score).collect::<Result<_, _>>()?
    };
    let by_pos: HashMap<usize, &VerificationTrace> = distinct.iter().copied().zip(scored.iter()).collect();

    let traces: Vec<VerificationTrace> = candidates
        .iter()
        .enumerate()
        .map(|(pos, c)| {
            let owner = owners[pos];
            if owner == pos {
                by_pos[&pos].clone()
            } else {
                let mut shared = by_pos[&owner].clone();
                shared.candidate_index = c.index;
                shared.shared_with = Some(candidates[owner].index);
                shared.transcripts.clear();
                shared
            }
        })
        .collect();
    let chosen_index = select_action(candidates, &traces)?.index;
    let chosen = candidates
        .iter()
        .position(|c| c.index == chosen_index)
        .expect("selected candidate is in the list");
    Ok(StepVerdict {
        consensus: None,
        traces,
        chosen,
    })
}
