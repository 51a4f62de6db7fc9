//! Lettered textual observations built from the navigable edges at a viewpoint.
//!
//! Option `A` is always `stop`; moves follow [`NavGraph::navigable_from`]
//! order and render as `<direction> to <<caption>>`.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{NavEdge, NavGraph, WorldError};

pub const STOP_LETTER: char = 'A';
const MAX_OPTIONS: usize = 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("no caption for key {0}")]
    MissingCaption(String),
    #[error("caption is empty")]
    EmptyCaption,
    #[error("{0} navigable options exceed the 25 available letters")]
    TooManyOptions(usize),
    #[error("caption document: {0}")]
    CaptionFile(String),
    #[error("cannot parse observation text at byte {offset}: {reason}")]
    Unparseable { offset: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPhrase {
    TurnLeft,
    TurnRight,
    GoForward,
    GoBack,
    GoUp,
    GoDown,
}

impl DirectionPhrase {
    pub const ALL: [DirectionPhrase; 6] = [
        Self::TurnLeft,
        Self::TurnRight,
        Self::GoForward,
        Self::GoBack,
        Self::GoUp,
        Self::GoDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TurnLeft => "turn left",
            Self::TurnRight => "turn right",
            Self::GoForward => "go forward",
            Self::GoBack => "go back",
            Self::GoUp => "go up",
            Self::GoDown => "go down",
        }
    }

    pub fn from_text(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == text)
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Self::GoUp | Self::GoDown)
    }
}

/// Angular cutoffs for [`map_direction`], in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectionThresholds {
    pub elevation: f64,
    pub forward: f64,
    pub back: f64,
}

impl Default for DirectionThresholds {
    fn default() -> Self {
        Self {
            elevation: 15.0,
            forward: 45.0,
            back: 135.0,
        }
    }
}

/// Wraps an angle difference into `(-180, 180]`.
pub fn wrap_delta(deg: f64) -> f64 {
    let d = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if d <= -180.0 {
        d + 360.0
    } else {
        d
    }
}

pub fn map_direction(
    agent_heading: f64,
    agent_elevation: f64,
    edge_heading: f64,
    edge_elevation: f64,
    thresholds: &DirectionThresholds,
) -> DirectionPhrase {
    let d_elev = edge_elevation - agent_elevation;
    if d_elev.abs() > thresholds.elevation {
        return if d_elev > 0.0 {
            DirectionPhrase::GoUp
        } else {
            DirectionPhrase::GoDown
        };
    }
    let d_head = wrap_delta(edge_heading - agent_heading);
    if d_head.abs() <= thresholds.forward {
        DirectionPhrase::GoForward
    } else if d_head.abs() >= thresholds.back {
        DirectionPhrase::GoBack
    } else if d_head > 0.0 {
        DirectionPhrase::TurnRight
    } else {
        DirectionPhrase::TurnLeft
    }
}

pub fn render_option(phrase: DirectionPhrase, caption: &str) -> Result<String, TextError> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(TextError::EmptyCaption);
    }
    Ok(format!("{} to <{}>", phrase.as_str(), caption))
}

/// Source of view captions keyed by `caption_key`. Implementations must
/// tolerate concurrent reads.
pub trait CaptionProvider: Send + Sync {
    fn caption(&self, key: &str) -> Option<String>;
}

/// Static captions loaded from a `{key: caption}` document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaptionStore {
    captions: BTreeMap<String, String>,
}

impl CaptionStore {
    pub fn load<R: Read>(source: R) -> Result<Self, TextError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_reader(source).map_err(|e| TextError::CaptionFile(e.to_string()))?;
        let mut store = Self::default();
        for (k, v) in raw {
            store.insert(k, v);
        }
        Ok(store)
    }

    /// Inserts a caption, keeping only its first sentence.
    pub fn insert(&mut self, key: impl Into<String>, caption: impl AsRef<str>) {
        let key = key.into();
        let cleaned = clean_caption(caption.as_ref());
        if cleaned.dropped_tail {
            log::warn!("caption {key}: keeping only the first sentence");
        }
        self.captions.insert(key, cleaned.text);
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.captions.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Adds every caption of `other`; existing keys are overwritten.
    pub fn merge(&mut self, other: &CaptionStore) {
        for (k, v) in &other.captions {
            self.captions.insert(k.clone(), v.clone());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.captions).expect("captions serialize")
    }
}

impl CaptionProvider for CaptionStore {
    fn caption(&self, key: &str) -> Option<String> {
        self.captions.get(key).cloned()
    }
}

struct CleanCaption {
    text: String,
    dropped_tail: bool,
}

/// First sentence, with bracket characters removed and whitespace collapsed.
/// Brackets are reserved by the observation layout.
fn clean_caption(raw: &str) -> CleanCaption {
    let trimmed = raw.trim();
    let mut end = trimmed.len();
    let mut chars = trimmed.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' | '\r' => true,
            '.' | '!' | '?' => chars.peek().is_none_or(|&(_, n)| n.is_whitespace()),
            _ => false,
        };
        if boundary {
            end = i;
            break;
        }
    }
    let dropped_tail = !trimmed[end..]
        .trim_matches(|c: char| c == '.' || c == '!' || c == '?' || c.is_whitespace())
        .is_empty();
    let text = trimmed[..end]
        .chars()
        .filter(|c| !matches!(c, '<' | '>' | '[' | ']'))
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    CleanCaption { text, dropped_tail }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Stop,
    Move,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationOption {
    pub letter: char,
    pub kind: OptionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionPhrase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<NavEdge>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDescription {
    pub options: Vec<ObservationOption>,
    pub rendered: String,
}

impl ObservationDescription {
    pub fn option(&self, letter: char) -> Option<&ObservationOption> {
        self.options.iter().find(|o| o.letter == letter)
    }

    pub fn letters(&self) -> Vec<char> {
        self.options.iter().map(|o| o.letter).collect()
    }

    pub fn contains(&self, letter: char) -> bool {
        self.option(letter).is_some()
    }
}

pub fn build_observation(
    graph: &NavGraph,
    at: &str,
    agent_heading: f64,
    agent_elevation: f64,
    captions: &dyn CaptionProvider,
    thresholds: &DirectionThresholds,
) -> Result<ObservationDescription, TextError> {
    let edges = graph.navigable_from(at)?;
    if edges.len() + 1 > MAX_OPTIONS {
        return Err(TextError::TooManyOptions(edges.len()));
    }
    let mut options = Vec::with_capacity(edges.len() + 1);
    options.push(ObservationOption {
        letter: STOP_LETTER,
        kind: OptionKind::Stop,
        direction: None,
        edge: None,
        text: "stop".into(),
    });
    for (i, edge) in edges.into_iter().enumerate() {
        let caption = captions
            .caption(&edge.caption_key)
            .ok_or_else(|| TextError::MissingCaption(edge.caption_key.clone()))?;
        let phrase = map_direction(agent_heading, agent_elevation, edge.heading, edge.elevation, thresholds);
        options.push(ObservationOption {
            letter: letter_at(i + 1),
            kind: OptionKind::Move,
            direction: Some(phrase),
            edge: Some(edge.clone()),
            text: render_option(phrase, &caption)?,
        });
    }
    let rendered = render_options(&options);
    Ok(ObservationDescription { options, rendered })
}

pub fn letter_at(index: usize) -> char {
    (b'A' + index as u8) as char
}

fn render_options(options: &[ObservationOption]) -> String {
    let body = options
        .iter()
        .map(|o| format!("{}. {}", o.letter, o.text))
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{body}]")
}

/// Recovers `(letter, text)` pairs from a rendered observation.
pub fn parse_rendered(rendered: &str) -> Result<Vec<(char, String)>, TextError> {
    let fail = |offset: usize, reason: &str| TextError::Unparseable {
        offset,
        reason: reason.to_string(),
    };
    let mut rest = rendered
        .strip_prefix('[')
        .ok_or_else(|| fail(0, "missing '['"))?;
    let mut offset = 1;
    let mut out = Vec::new();
    loop {
        let letter = letter_at(out.len());
        let head = format!("{letter}. ");
        rest = rest
            .strip_prefix(head.as_str())
            .ok_or_else(|| fail(offset, &format!("expected option {letter}")))?;
        offset += head.len();
        let text_len = if letter == STOP_LETTER {
            if !rest.starts_with("stop") {
                return Err(fail(offset, "option A must be stop"));
            }
            4
        } else {
            let close = rest.find('>').ok_or_else(|| fail(offset, "unterminated caption"))?;
            close + 1
        };
        out.push((letter, rest[..text_len].to_string()));
        rest = &rest[text_len..];
        offset += text_len;
        if rest == "]" {
            return Ok(out);
        }
        rest = rest
            .strip_prefix(", ")
            .ok_or_else(|| fail(offset, "expected ', ' or ']'"))?;
        offset += 2;
    }
}
