//! Navigational chain-of-thought: prompts, output parsing, instruction
//! entities, and ground-truth labels.

mod entities;
mod labels;
mod parse;
mod prompt;

use thiserror::Error;

pub use entities::{
    entity_prompt, extract_entities, find_phrase, parse_entity_lines, tokens, EntityExtractor, EntityList,
    Lexicon, ENTITY_PROMPT_HEADER,
};
pub use labels::{
    emit_training_examples, gt_prediction_label, CotLabel, LabelContext, SimilarityScorer, TokenOverlap,
    TrainingRecord, TrainingTask,
};
pub use parse::{parse_cot, parse_cot_with, CotField, CotTriple, ParseError, ParseMode};
pub use prompt::{
    build_nav_prompt, parse_input_block, render_history_lines, render_input_block, InputFields, DEFAULT_EXAMPLE,
    EMPTY_HISTORY, NAV_PREAMBLE,
};

use crate::backend::BackendError;
use crate::textualizer::TextError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("entity list is empty")]
    EmptyEntities,
    #[error("ground-truth step {from} -> {to} has no matching option")]
    NoMatchingEdge { from: String, to: String },
    #[error("no caption for key {0}")]
    MissingCaption(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Text(#[from] TextError),
}
