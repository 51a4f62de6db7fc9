use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Candidate;
use crate::cot::{find_phrase, EntityList, EMPTY_HISTORY};
use crate::textualizer::ObservationDescription;

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

/// First line of every true/false verification prompt.
pub const TFV_HEADER: &str = "You are checking a proposed step of an indoor navigation agent.";

/// First line of every masked-entity verification prompt.
pub const MEV_HEADER: &str = "You are reconstructing a hidden phrase in a navigation instruction.";

/// How much of a candidate's reasoning the verifier sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateView {
    #[default]
    FullCot,
    ActionOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedInstruction {
    pub text: String,
    pub masked_entity: String,
    pub entity_index: usize,
    /// Byte span of the masked phrase in the original instruction.
    pub span: (usize, usize),
    pub mask_token: String,
}

/// Masks the first `min(r, entities)` entities one at a time, replacing the
/// first occurrence of each with `mask_token`.
pub fn prepare_masks(instruction: &str, r: usize, entities: &EntityList, mask_token: &str) -> Vec<MaskedInstruction> {
    entities
        .entities
        .iter()
        .enumerate()
        .filter_map(|(i, entity)| {
            let Some((start, end)) = find_phrase(instruction, entity) else {
                log::warn!("entity {entity:?} not found in instruction; skipping mask");
                return None;
            };
            Some(MaskedInstruction {
                text: format!("{}{}{}", &instruction[..start], mask_token, &instruction[end..]),
                masked_entity: instruction[start..end].to_string(),
                entity_index: i,
                span: (start, end),
                mask_token: mask_token.to_string(),
            })
        })
        .take(r)
        .collect()
}

fn candidate_block(observation: &ObservationDescription, candidate: &Candidate, view: CandidateView) -> String {
    let action = match observation.option(candidate.cot.action) {
        Some(o) => format!("{} ({})", candidate.cot.action, o.text),
        None => candidate.cot.action.to_string(),
    };
    match view {
        CandidateView::FullCot => format!("Prediction: {}. Action: {}.", candidate.cot.prediction, action),
        CandidateView::ActionOnly => format!("Action: {action}."),
    }
}

fn context_lines(instruction: &str, history: &str, observation: &ObservationDescription) -> String {
    let history = if history.trim().is_empty() { EMPTY_HISTORY } else { history };
    format!(
        "Instruction: {}\nHistory:\n{}\nObservation: {}",
        instruction.trim(),
        history,
        observation.rendered
    )
}

pub fn build_tfv_prompt(
    instruction: &str,
    history: &str,
    observation: &ObservationDescription,
    candidate: &Candidate,
    view: CandidateView,
) -> String {
    format!(
        "{TFV_HEADER}\n{}\nCandidate: {}\nQuestion: Is the candidate a correct next step for following the instruction? \
Answer with one word, True or False.\nAnswer:",
        context_lines(instruction, history, observation),
        candidate_block(observation, candidate, view)
    )
}

pub fn build_mev_prompt(
    masked: &MaskedInstruction,
    history: &str,
    observation: &ObservationDescription,
    candidate: &Candidate,
    view: CandidateView,
) -> String {
    format!(
        "{MEV_HEADER}\n{}\nAssume this step is executed: {}\nQuestion: One phrase of the instruction is masked. \
Output only the masked phrase.\nAnswer:",
        context_lines(&masked.text, history, observation),
        candidate_block(observation, candidate, view)
    )
}

/// Outcome of interpreting a true/false verifier response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfvReading {
    pub value: bool,
    pub unparsed: bool,
}

/// Leading-token true/false reading; anything unrecognized reads as false.
pub fn parse_tfv(response: &str) -> TfvReading {
    static LEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\s*`'\x22(\[]*([A-Za-z]+)").unwrap());
    let token = LEADING
        .captures(response)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str().to_ascii_lowercase());
    match token.as_deref() {
        Some("true" | "yes") => TfvReading {
            value: true,
            unparsed: false,
        },
        Some("false" | "no") => TfvReading {
            value: false,
            unparsed: false,
        },
        _ => TfvReading {
            value: false,
            unparsed: true,
        },
    }
}

fn normalize_entity(text: &str) -> String {
    let lowered = text.trim().to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let stripped = ["a ", "an ", "the "]
        .iter()
        .find_map(|article| trimmed.strip_prefix(article))
        .unwrap_or(trimmed);
    stripped.trim().to_string()
}

/// Exact match after lowercasing, whitespace collapsing, and stripping a
/// leading article and trailing punctuation.
pub fn entity_match(predicted: &str, gold: &str) -> bool {
    normalize_entity(predicted) == normalize_entity(gold)
}

/// The recovered phrase in an MEV response: its first non-empty line.
pub fn mev_answer(response: &str) -> &str {
    response.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}
