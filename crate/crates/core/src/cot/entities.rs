use std::collections::HashSet;
use std::io::Read;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::backend::{SamplingParams, TextBackend};

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.txt");

/// First line of every entity-extraction prompt.
pub const ENTITY_PROMPT_HEADER: &str =
    "List every landmark, object, and scene phrase mentioned in the navigation instruction below. \
Write one phrase per line and nothing else.";

/// Instruction entities in order of first appearance, deduplicated case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityList {
    pub entities: Vec<String>,
    pub source_instruction: String,
}

impl EntityList {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Builds a list from arbitrary phrases: phrases absent from the
    /// instruction are dropped, the rest are ordered by first appearance.
    pub fn from_phrases<I, S>(instruction: &str, phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut located: Vec<(usize, String)> = Vec::new();
        for phrase in phrases {
            let phrase = normalize_phrase(phrase.as_ref());
            if phrase.is_empty() {
                continue;
            }
            match find_phrase(instruction, &phrase) {
                Some((start, _)) => located.push((start, phrase)),
                None => log::debug!("dropping entity {phrase:?}: not found in instruction"),
            }
        }
        located.sort_by_key(|(start, _)| *start);
        let mut seen = HashSet::new();
        let entities = located
            .into_iter()
            .map(|(_, p)| p)
            .filter(|p| seen.insert(p.to_lowercase()))
            .collect();
        Self {
            entities,
            source_instruction: instruction.to_string(),
        }
    }
}

/// Landmark phrases matched as whole-token sequences, longest first.
#[derive(Debug, Clone)]
pub struct Lexicon {
    phrases: Vec<Vec<String>>,
    max_len: usize,
}

impl Lexicon {
    pub fn bundled() -> &'static Lexicon {
        static BUNDLED: LazyLock<Lexicon> = LazyLock::new(|| Lexicon::parse(BUNDLED_LEXICON));
        &BUNDLED
    }

    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let mut phrases: Vec<Vec<String>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| tokens(l).into_iter().map(|(_, _, t)| t).collect::<Vec<_>>())
            .filter(|t: &Vec<String>| !t.is_empty())
            .collect();
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        phrases.dedup();
        let max_len = phrases.first().map_or(0, Vec::len);
        Self { phrases, max_len }
    }

    pub fn load<R: Read>(mut source: R) -> std::io::Result<Self> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, phrase: &str) -> bool {
        let t: Vec<String> = tokens(phrase).into_iter().map(|(_, _, t)| t).collect();
        self.phrases.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    fn longest_match(&self, words: &[String]) -> Option<usize> {
        let limit = words.len().min(self.max_len);
        self.phrases
            .iter()
            .filter(|p| p.len() <= limit)
            .find(|p| words[..p.len()] == p[..])
            .map(Vec::len)
    }
}

pub enum EntityExtractor<'a> {
    RuleBased(&'a Lexicon),
    Backend {
        backend: &'a dyn TextBackend,
        params: SamplingParams,
    },
}

impl Default for EntityExtractor<'static> {
    fn default() -> Self {
        Self::RuleBased(Lexicon::bundled())
    }
}

pub fn extract_entities(instruction: &str, extractor: &EntityExtractor<'_>) -> Result<EntityList, LabelError> {
    if instruction.trim().is_empty() {
        return Err(LabelError::EmptyInstruction);
    }
    match extractor {
        EntityExtractor::RuleBased(lexicon) => Ok(rule_based(instruction, lexicon)),
        EntityExtractor::Backend { backend, params } => {
            let response = backend.generate(&entity_prompt(instruction), params)?;
            Ok(EntityList::from_phrases(instruction, parse_entity_lines(&response.text)))
        }
    }
}

pub fn entity_prompt(instruction: &str) -> String {
    format!("{ENTITY_PROMPT_HEADER}\nInstruction: {}\nPhrases:", instruction.trim())
}

/// Splits a line-separated phrase list, dropping bullets and numbering.
pub fn parse_entity_lines(text: &str) -> Vec<String> {
    static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]+|\d+[.)])\s*").unwrap());
    text.lines()
        .map(|l| BULLET.replace(l, "").to_string())
        .map(|l| normalize_phrase(&l))
        .filter(|l| !l.is_empty())
        .collect()
}

fn rule_based(instruction: &str, lexicon: &Lexicon) -> EntityList {
    static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([^<>]+)>").unwrap());
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut bracketed = Vec::new();
    for cap in BRACKETED.captures_iter(instruction) {
        let whole = cap.get(0).expect("group 0");
        let inner = cap.get(1).expect("group 1");
        bracketed.push(whole.range());
        found.push((inner.start(), normalize_phrase(inner.as_str()).to_lowercase()));
    }
    let toks: Vec<(usize, usize, String)> = tokens(instruction)
        .into_iter()
        .filter(|(start, _, _)| !bracketed.iter().any(|r| r.contains(start)))
        .collect();
    let words: Vec<String> = toks.iter().map(|(_, _, t)| t.clone()).collect();
    let mut i = 0;
    while i < words.len() {
        match lexicon.longest_match(&words[i..]) {
            Some(len) => {
                found.push((toks[i].0, words[i..i + len].join(" ")));
                i += len;
            }
            None => i += 1,
        }
    }
    found.sort_by_key(|(start, _)| *start);
    let mut seen = HashSet::new();
    let entities = found
        .into_iter()
        .map(|(_, p)| p)
        .filter(|p| !p.is_empty() && seen.insert(p.to_lowercase()))
        .collect();
    EntityList {
        entities,
        source_instruction: instruction.to_string(),
    }
}

/// Lowercased alphanumeric tokens with their byte spans.
pub fn tokens(text: &str) -> Vec<(usize, usize, String)> {
    static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?").unwrap());
    WORD.find_iter(text)
        .map(|m| (m.start(), m.end(), m.as_str().to_lowercase()))
        .collect()
}

fn normalize_phrase(text: &str) -> String {
    text.trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Byte span of the first case-insensitive, whole-word occurrence of `phrase`.
pub fn find_phrase(haystack: &str, phrase: &str) -> Option<(usize, usize)> {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    if words.is_empty() {
        return None;
    }
    let pattern = format!(r"(?i)\b{}\b", words.join(r"\s+"));
    let re = Regex::new(&pattern).ok()?;
    re.find(haystack).map(|m| (m.start(), m.end()))
}
