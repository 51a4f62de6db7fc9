//! Navigable graph worlds and the episodes that run on them.

mod episode;
mod graph;
mod matterport;
mod synth;

use thiserror::Error;

pub use episode::{
    episodes_to_json, load_episodes, Episode, EpisodeLoad, EpisodeRejection, GraphRegistry,
};
pub use graph::{distance, normalize_heading, view_angles, GraphFormat, NavEdge, NavGraph, Viewpoint};
pub use synth::{synth_world, SynthConfig, SynthWorld, SYNTH_LANDMARKS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("malformed record{}: {message}", record.map(|r| format!(" {r}")).unwrap_or_default())]
    Malformed { record: Option<usize>, message: String },
    #[error("invalid record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
    #[error("edge record {record} references unknown viewpoint {viewpoint}")]
    DanglingEdge { record: usize, viewpoint: String },
    #[error("duplicate viewpoint id {0}")]
    DuplicateViewpoint(String),
    #[error("unknown viewpoint {0}")]
    UnknownViewpoint(String),
    #[error("unknown scan {0}")]
    UnknownScan(String),
    #[error("{to} is unreachable from {from}")]
    Unreachable { from: String, to: String },
    #[error("episode record {record} has an empty instruction")]
    EmptyInstruction { record: usize },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
}
