//! Line-delimited JSON episode traces.
//!
//! A trace file holds one header line, one line per step, and one result
//! line, each tagged by `kind`. Nothing time-dependent is recorded, so
//! identical runs produce identical bytes, and parsing then re-serializing a
//! trace reproduces it exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, EpisodeResult, StepRecord, Termination};
use crate::metrics::MetricRecord;
use crate::world::Episode;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub episode_id: String,
    pub scan: String,
    pub instruction: String,
    pub start: String,
    pub gt_path: Vec<String>,
    pub backend: String,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub trajectory: Vec<String>,
    pub terminated_by: Termination,
    pub metrics: Option<MetricRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Episode(TraceHeader),
    Step(StepRecord),
    Result(TraceResult),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub result: TraceResult,
}

impl EpisodeTrace {
    /// Builds a trace from a finished or aborted episode. Errors without a
    /// partial result yield a trace with no steps.
    pub fn new(
        episode: &Episode,
        config: &AgentConfig,
        backend: &str,
        outcome: &Result<EpisodeResult, AgentError>,
    ) -> Self {
        let header = TraceHeader {
            episode_id: episode.id.clone(),
            scan: episode.scan.clone(),
            instruction: episode.instruction.clone(),
            start: episode.start.clone(),
            gt_path: episode.gt_path.clone(),
            backend: backend.to_string(),
            config: config.clone(),
        };
        let (steps, result) = match outcome {
            Ok(r) => (
                r.steps.clone(),
                TraceResult {
                    trajectory: r.trajectory.clone(),
                    terminated_by: r.terminated_by,
                    metrics: r.metrics,
                    error: None,
                },
            ),
            Err(e) => {
                let partial = e.partial();
                (
                    partial.map(|p| p.steps.clone()).unwrap_or_default(),
                    TraceResult {
                        trajectory: partial
                            .map(|p| p.trajectory.clone())
                            .unwrap_or_else(|| vec![episode.start.clone()]),
                        terminated_by: Termination::Aborted,
                        metrics: None,
                        error: Some(e.to_string()),
                    },
                )
            }
        };
        Self { header, steps, result }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &TraceLine| {
            out.push_str(&serde_json::to_string(line).expect("trace lines serialize"));
            out.push('\n');
        };
        push(&TraceLine::Episode(self.header.clone()));
        for step in &self.steps {
            push(&TraceLine::Step(step.clone()));
        }
        push(&TraceLine::Result(self.result.clone()));
        out
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let malformed = |line: usize, message: String| TraceError::Malformed { line, message };
        let mut header = None;
        let mut steps = Vec::new();
        let mut result = None;
        for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line = i + 1;
            if result.is_some() {
                return Err(malformed(line, "content after the result line".into()));
            }
            match serde_json::from_str::<TraceLine>(raw).map_err(|e| malformed(line, e.to_string()))? {
                TraceLine::Episode(h) if header.is_none() && line == 1 => header = Some(h),
                TraceLine::Episode(_) => return Err(malformed(line, "unexpected episode header".into())),
                TraceLine::Step(_) | TraceLine::Result(_) if header.is_none() => {
                    return Err(malformed(line, "missing episode header".into()))
                }
                TraceLine::Step(s) => steps.push(s),
                TraceLine::Result(r) => result = Some(r),
            }
        }
        let header = header.ok_or_else(|| malformed(1, "empty trace".into()))?;
        let result = result.ok_or_else(|| malformed(text.lines().count(), "missing result line".into()))?;
        Ok(Self { header, steps, result })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// File name for this trace inside an output directory.
    pub fn file_name(&self) -> String {
        let safe: String = self
            .header
            .episode_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect();
        format!("{safe}.jsonl")
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), TraceError> {
    let io = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
