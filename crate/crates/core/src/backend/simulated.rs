//! A calibrated stochastic stand-in for a fine-tuned navigation model.
//!
//! The simulator reads the structured prompts the pipeline emits, works out
//! which option is correct from the instruction's landmark sequence, and
//! answers with fixed per-query probabilities:
//!
//! * navigation samples pick the correct option with probability
//!   `candidate_correctness`, otherwise a uniformly random incorrect option;
//! * true/false checks say "True" with probability `verify_true_correct` for
//!   a correct candidate and `verify_true_incorrect` otherwise;
//! * masked-entity checks recover the hidden phrase with the same pair of
//!   probabilities.
//!
//! The correct option at a step is the one whose caption names the next
//! instruction landmark not yet covered by the history; once every landmark
//! has been reached it is stop. If the history strays from the landmark
//! sequence no option is correct.
//!
//! Randomness comes from a ChaCha stream keyed by the prompt and the sample
//! seed, so responses are a pure function of `(prompt, params)` whenever a
//! seed is given or the temperature is zero.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{normalize_prompt, BackendError, BackendResponse, SamplingParams, TextBackend};
use crate::cot::{
    extract_entities, find_phrase, parse_input_block, EntityExtractor, ENTITY_PROMPT_HEADER, NAV_PREAMBLE,
};
use crate::textualizer::{parse_rendered, STOP_LETTER};
use crate::verify::{MEV_HEADER, TFV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Navigation,
    TrueFalse,
    MaskedEntity,
    EntityExtraction,
    Unknown,
}

/// Recognizes the pipeline's prompt families by their fixed first line.
pub fn classify_prompt(prompt: &str) -> PromptKind {
    let prompt = prompt.trim_start();
    if prompt.starts_with(NAV_PREAMBLE) {
        PromptKind::Navigation
    } else if prompt.starts_with(TFV_HEADER) {
        PromptKind::TrueFalse
    } else if prompt.starts_with(MEV_HEADER) {
        PromptKind::MaskedEntity
    } else if prompt.starts_with(ENTITY_PROMPT_HEADER) {
        PromptKind::EntityExtraction
    } else {
        PromptKind::Unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationProfile {
    pub candidate_correctness: f64,
    pub verify_true_correct: f64,
    pub verify_true_incorrect: f64,
    pub recover_correct: f64,
    pub recover_incorrect: f64,
    /// Probability that a navigation sample comes back as unstructured text.
    pub format_error_rate: f64,
}

impl Default for SimulationProfile {
    fn default() -> Self {
        Self {
            candidate_correctness: 0.5,
            verify_true_correct: 0.8,
            verify_true_incorrect: 0.3,
            recover_correct: 0.8,
            recover_incorrect: 0.3,
            format_error_rate: 0.0,
        }
    }
}

pub struct SimulatedBackend {
    id: String,
    profile: SimulationProfile,
    /// Unmasked instructions, keyed by nothing: masked prompts are matched by
    /// prefix and suffix around the mask.
    instructions: Vec<String>,
    entity_cache: std::sync::Mutex<HashMap<String, Vec<String>>>,
    unseeded: AtomicU64,
}

impl std::fmt::Debug for SimulatedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimulatedBackend")
            .field("profile", &self.profile)
            .field("instructions", &self.instructions.len())
            .finish()
    }
}

impl SimulatedBackend {
    /// `instructions` must include every instruction that may appear masked.
    pub fn new<I, S>(profile: SimulationProfile, instructions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: "simulated".into(),
            profile,
            instructions: instructions.into_iter().map(|s| s.into().trim().to_string()).collect(),
            entity_cache: Default::default(),
            unseeded: AtomicU64::new(0),
        }
    }

    pub fn profile(&self) -> &SimulationProfile {
        &self.profile
    }

    fn rng(&self, prompt: &str, params: &SamplingParams) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(normalize_prompt(prompt).as_bytes());
        if !params.is_greedy() {
            let seed = params
                .seed
                .unwrap_or_else(|| self.unseeded.fetch_add(1, Ordering::Relaxed) ^ 0xA5A5_0000_0000_0000);
            hasher.update(seed.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }

    fn entities(&self, instruction: &str) -> Vec<String> {
        let mut cache = self.entity_cache.lock().expect("entity cache");
        cache
            .entry(instruction.to_string())
            .or_insert_with(|| {
                extract_entities(instruction, &EntityExtractor::default())
                    .map(|l| l.entities)
                    .unwrap_or_default()
            })
            .clone()
    }

    fn respond(&self, prompt: &str, rng: &mut ChaCha8Rng) -> Result<String, BackendError> {
        let unknown = || BackendError::UnknownPrompt {
            normalized: normalize_prompt(prompt),
        };
        match classify_prompt(prompt) {
            PromptKind::Navigation => {
                let fields = parse_input_block(prompt).ok_or_else(unknown)?;
                let options = parse_rendered(fields.observation).map_err(|_| unknown())?;
                let entities = self.entities(fields.instruction);
                let state = StepState::new(&entities, &history_captions(fields.history), &options);
                Ok(self.navigate(&state, &entities, &options, rng))
            }
            PromptKind::TrueFalse => {
                let fields = VerifyFields::parse(prompt).ok_or_else(unknown)?;
                let options = parse_rendered(fields.observation).map_err(|_| unknown())?;
                let entities = self.entities(fields.instruction);
                let state = StepState::new(&entities, &history_captions(fields.history), &options);
                let p = if state.is_correct(fields.action) {
                    self.profile.verify_true_correct
                } else {
                    self.profile.verify_true_incorrect
                };
                Ok(if rng.random_bool(p) { "True." } else { "False." }.to_string())
            }
            PromptKind::MaskedEntity => {
                let fields = VerifyFields::parse(prompt).ok_or_else(unknown)?;
                let (original, gold) = self.unmask(fields.instruction).ok_or_else(unknown)?;
                let options = parse_rendered(fields.observation).map_err(|_| unknown())?;
                let entities = self.entities(&original);
                let state = StepState::new(&entities, &history_captions(fields.history), &options);
                let p = if state.is_correct(fields.action) {
                    self.profile.recover_correct
                } else {
                    self.profile.recover_incorrect
                };
                if rng.random_bool(p) {
                    return Ok(gold);
                }
                let decoys: Vec<&String> = entities.iter().filter(|e| !e.eq_ignore_ascii_case(&gold)).collect();
                Ok(decoys.choose(rng).map_or_else(|| "nothing".to_string(), |e| e.to_string()))
            }
            PromptKind::EntityExtraction => {
                let instruction = prompt
                    .lines()
                    .find_map(|l| l.strip_prefix("Instruction: "))
                    .ok_or_else(unknown)?;
                Ok(self.entities(instruction).join("\n"))
            }
            PromptKind::Unknown => Err(unknown()),
        }
    }

    fn navigate(
        &self,
        state: &StepState,
        entities: &[String],
        options: &[(char, String)],
        rng: &mut ChaCha8Rng,
    ) -> String {
        if rng.random_bool(self.profile.format_error_rate) {
            return "I should keep walking.".to_string();
        }
        let correct = state.correct;
        let incorrect: Vec<&(char, String)> = options.iter().filter(|(l, _)| Some(*l) != correct).collect();
        let pick_correct = correct.is_some() && (incorrect.is_empty() || rng.random_bool(self.profile.candidate_correctness));
        let (letter, prediction) = if pick_correct {
            let letter = correct.expect("checked");
            let prediction = entities
                .get(state.progress)
                .or(entities.last())
                .cloned()
                .unwrap_or_else(|| "destination".into());
            (letter, prediction)
        } else {
            let (letter, text) = incorrect.choose(rng).expect("observation has at least the stop option");
            let prediction = caption_of(text).map_or_else(|| "destination".into(), strip_article);
            (*letter, prediction)
        };
        format!("Prediction: {prediction}. View match: {letter} supports the prediction. Action: {letter}.")
    }

    fn unmask(&self, masked: &str) -> Option<(String, String)> {
        let at = masked.find("[MASK]")?;
        let (prefix, suffix) = (&masked[..at], &masked[at + "[MASK]".len()..]);
        self.instructions.iter().find_map(|original| {
            (original.len() > prefix.len() + suffix.len() && original.starts_with(prefix) && original.ends_with(suffix))
                .then(|| (original.clone(), original[prefix.len()..original.len() - suffix.len()].to_string()))
        })
    }
}

impl TextBackend for SimulatedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        params.validate()?;
        let started = Instant::now();
        let mut rng = self.rng(prompt, params);
        let text = self.respond(prompt, &mut rng)?;
        Ok(BackendResponse {
            text,
            latency: started.elapsed().max(Duration::ZERO),
            backend_id: self.id.clone(),
        })
    }
}

/// Where the agent stands relative to the instruction's landmark sequence.
struct StepState {
    progress: usize,
    correct: Option<char>,
}

impl StepState {
    fn new(entities: &[String], history: &[String], options: &[(char, String)]) -> Self {
        let on_track = history.len() <= entities.len()
            && history
                .iter()
                .zip(entities)
                .all(|(caption, entity)| find_phrase(caption, entity).is_some());
        let progress = history.len();
        let correct = if !on_track {
            None
        } else if progress == entities.len() {
            Some(STOP_LETTER)
        } else {
            options
                .iter()
                .find(|(letter, text)| {
                    *letter != STOP_LETTER
                        && caption_of(text).is_some_and(|c| find_phrase(c, &entities[progress]).is_some())
                })
                .map(|(l, _)| *l)
        };
        Self { progress, correct }
    }

    fn is_correct(&self, letter: char) -> bool {
        self.correct == Some(letter)
    }
}

fn caption_of(option_text: &str) -> Option<&str> {
    let start = option_text.find('<')? + 1;
    let end = start + option_text[start..].find('>')?;
    Some(&option_text[start..end])
}

fn strip_article(caption: &str) -> String {
    ["a ", "an ", "the "]
        .iter()
        .find_map(|a| caption.strip_prefix(a))
        .unwrap_or(caption)
        .to_string()
}

fn history_captions(history: &str) -> Vec<String> {
    history
        .lines()
        .filter(|l| l.trim_start().starts_with("Step "))
        .map(|l| caption_of(l).unwrap_or("").to_string())
        .collect()
}

/// Fields of a verification prompt needed to judge the candidate.
struct VerifyFields<'a> {
    instruction: &'a str,
    history: &'a str,
    observation: &'a str,
    action: char,
}

impl<'a> VerifyFields<'a> {
    fn parse(prompt: &'a str) -> Option<Self> {
        let instruction = prompt.lines().find_map(|l| l.strip_prefix("Instruction: "))?;
        let h_start = prompt.find("\nHistory:\n")? + "\nHistory:\n".len();
        let h_len = prompt[h_start..].find("\nObservation: ")?;
        let history = &prompt[h_start..h_start + h_len];
        let observation = prompt[h_start + h_len + 1..]
            .lines()
            .next()?
            .strip_prefix("Observation: ")?;
        let candidate = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Candidate: ").or_else(|| l.strip_prefix("Assume this step is executed: ")))?;
        let at = candidate.find("Action: ")? + "Action: ".len();
        let action = candidate[at..].chars().next()?;
        Some(Self {
            instruction,
            history,
            observation,
            action,
        })
    }
}
