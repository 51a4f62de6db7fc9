use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textualizer::ObservationDescription;

/// One parsed chain-of-thought sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotTriple {
    pub prediction: String,
    pub view_match: char,
    pub action: char,
    pub raw: String,
}

impl CotTriple {
    /// Canonical single-line rendering used for deduplication and verification prompts.
    pub fn canonical(&self) -> String {
        format!(
            "Prediction: {}. View match: {} supports the prediction. Action: {}.",
            self.prediction, self.view_match, self.action
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotField {
    Prediction,
    ViewMatch,
    Action,
}

impl fmt::Display for CotField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Prediction => "prediction",
            Self::ViewMatch => "view_match",
            Self::Action => "action",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ParseError {
    #[error("missing field {field}")]
    MissingField { field: CotField, raw: String },
    #[error("option letter {letter} is not in the observation")]
    InvalidLetter { letter: char, raw: String },
}

impl ParseError {
    pub fn raw(&self) -> &str {
        match self {
            Self::MissingField { raw, .. } | Self::InvalidLetter { raw, .. } => raw,
        }
    }
}

/// `Strict` accepts only the exact labels; `Lenient` falls back to
/// case-insensitive labels and tolerates decoration around letters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Strict,
    #[default]
    Lenient,
}

pub fn parse_cot(raw: &str, observation: &ObservationDescription) -> Result<CotTriple, ParseError> {
    parse_cot_with(raw, &observation.letters(), ParseMode::Lenient)
}

pub fn parse_cot_with(raw: &str, letters: &[char], mode: ParseMode) -> Result<CotTriple, ParseError> {
    let fields = match strict_fields(raw) {
        Some(f) => Ok(f),
        None if mode == ParseMode::Lenient => lenient_fields(raw),
        None => Err(strict_missing(raw)),
    };
    let (prediction, view_match, action) = fields.map_err(|field| ParseError::MissingField {
        field,
        raw: raw.to_string(),
    })?;
    for letter in [view_match, action] {
        if !letters.contains(&letter) {
            return Err(ParseError::InvalidLetter {
                letter,
                raw: raw.to_string(),
            });
        }
    }
    Ok(CotTriple {
        prediction,
        view_match,
        action,
        raw: raw.to_string(),
    })
}

type Fields = (String, char, char);

fn clean_prediction(text: &str) -> String {
    let line = text.lines().next().unwrap_or("");
    line.trim()
        .trim_matches(|c: char| c == '*' || c == '"' || c == '`')
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':') || c.is_whitespace())
        .trim()
        .to_string()
}

fn strict_fields(raw: &str) -> Option<Fields> {
    const P: &str = "Prediction:";
    const V: &str = "View match:";
    const A: &str = "Action:";
    let p_end = raw.find(P)? + P.len();
    let v_at = p_end + raw[p_end..].find(V)?;
    let v_end = v_at + V.len();
    let a_end = v_end + raw[v_end..].find(A)? + A.len();
    let prediction = clean_prediction(&raw[p_end..v_at]);
    if prediction.is_empty() {
        return None;
    }
    Some((prediction, strict_letter(&raw[v_end..])?, strict_letter(&raw[a_end..])?))
}

fn strict_letter(text: &str) -> Option<char> {
    let mut chars = text.trim_start_matches(' ').chars();
    let c = chars.next()?;
    let next = chars.next();
    (c.is_ascii_uppercase() && next.is_none_or(|n| !n.is_alphanumeric())).then_some(c)
}

fn strict_missing(raw: &str) -> CotField {
    let Some(p) = raw.find("Prediction:") else {
        return CotField::Prediction;
    };
    let p_end = p + "Prediction:".len();
    let Some(v) = raw[p_end..].find("View match:").map(|v| v + p_end) else {
        return CotField::ViewMatch;
    };
    if clean_prediction(&raw[p_end..v]).is_empty() {
        return CotField::Prediction;
    }
    if strict_letter(&raw[v + "View match:".len()..]).is_none() {
        return CotField::ViewMatch;
    }
    CotField::Action
}

static PRED_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bprediction\s*[:\-]").unwrap());
static VM_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bview[\s_-]*match(?:es)?\s*[:\-]?").unwrap());
static ACT_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\baction\s*[:\-]").unwrap());

fn lenient_fields(raw: &str) -> Result<Fields, CotField> {
    let pred = PRED_LABEL.find(raw).ok_or(CotField::Prediction)?;
    let vm = VM_LABEL.find_at(raw, pred.end()).ok_or(CotField::ViewMatch)?;
    let act = ACT_LABEL.find_at(raw, vm.end()).ok_or(CotField::Action)?;
    let prediction = clean_prediction(&raw[pred.end()..vm.start()]);
    if prediction.is_empty() {
        return Err(CotField::Prediction);
    }
    let view_match = lenient_letter(&raw[vm.end()..]).ok_or(CotField::ViewMatch)?;
    let action = lenient_letter(&raw[act.end()..]).ok_or(CotField::Action)?;
    Ok((prediction, view_match, action))
}

fn lenient_letter(text: &str) -> Option<char> {
    let mut rest = text.trim_start_matches(|c: char| c.is_whitespace() || "*\"'([:`".contains(c));
    if rest.len() >= 7 && rest.is_char_boundary(7) && rest[..7].eq_ignore_ascii_case("option ") {
        rest = rest[7..].trim_start();
    }
    let mut chars = rest.chars();
    let c = chars.next()?;
    let next = chars.next();
    (c.is_ascii_alphabetic() && next.is_none_or(|n| !n.is_alphanumeric())).then(|| c.to_ascii_uppercase())
}
