use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::graph::NavGraph;
use super::WorldError;

/// One instruction-following task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub scan: String,
    pub instruction: String,
    pub start: String,
    #[serde(rename = "start_heading_deg")]
    pub start_heading: f64,
    /// Ground-truth route; the first element is `start`, the last is the goal.
    #[serde(rename = "path")]
    pub gt_path: Vec<String>,
}

impl Episode {
    pub fn goal(&self) -> &str {
        self.gt_path.last().map(String::as_str).unwrap_or(&self.start)
    }

    /// Checks the episode against its graph.
    pub fn validate(&self, graph: &NavGraph) -> Result<(), String> {
        if self.instruction.trim().is_empty() {
            return Err("empty instruction".into());
        }
        let Some(first) = self.gt_path.first() else {
            return Err("empty path".into());
        };
        if first != &self.start {
            return Err(format!("path starts at {first}, not at start {}", self.start));
        }
        if !self.start_heading.is_finite() {
            return Err("non-finite start heading".into());
        }
        for id in &self.gt_path {
            if !graph.contains(id) {
                return Err(format!("unknown viewpoint {id}"));
            }
        }
        for pair in self.gt_path.windows(2) {
            if graph.edge(&pair[0], &pair[1]).is_none() {
                return Err(format!("no edge {} -> {}", pair[0], pair[1]));
            }
        }
        Ok(())
    }
}

/// Graphs keyed by scan id.
#[derive(Debug, Clone, Default)]
pub struct GraphRegistry {
    graphs: BTreeMap<String, NavGraph>,
}

impl GraphRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scan: impl Into<String>, graph: NavGraph) {
        self.graphs.insert(scan.into(), graph);
    }

    pub fn get(&self, scan: &str) -> Option<&NavGraph> {
        self.graphs.get(scan)
    }

    pub fn graph_for(&self, episode: &Episode) -> Result<&NavGraph, WorldError> {
        self.get(&episode.scan)
            .ok_or_else(|| WorldError::UnknownScan(episode.scan.clone()))
    }

    pub fn scans(&self) -> impl Iterator<Item = &str> {
        self.graphs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRejection {
    pub record: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeLoad {
    pub episodes: Vec<Episode>,
    pub rejections: Vec<EpisodeRejection>,
}

/// Reads an episode list and validates each record against `registry`.
///
/// Undecodable records and empty instructions fail the whole load; records
/// that decode but do not fit their graph are reported in `rejections`.
pub fn load_episodes<R: Read>(source: R, registry: &GraphRegistry) -> Result<EpisodeLoad, WorldError> {
    let doc: Value = serde_json::from_reader(source).map_err(|e| WorldError::Malformed {
        record: None,
        message: format!("line {}: {e}", e.line()),
    })?;
    let items = match doc {
        Value::Array(items) => items,
        _ => {
            return Err(WorldError::Malformed {
                record: None,
                message: "episode document must be a list".into(),
            })
        }
    };
    let mut out = EpisodeLoad::default();
    for (i, item) in items.into_iter().enumerate() {
        let episode: Episode = serde_json::from_value(item).map_err(|e| WorldError::Malformed {
            record: Some(i),
            message: e.to_string(),
        })?;
        if episode.instruction.trim().is_empty() {
            return Err(WorldError::EmptyInstruction { record: i });
        }
        let verdict = match registry.get(&episode.scan) {
            None => Err(format!("unknown scan {}", episode.scan)),
            Some(graph) => episode.validate(graph),
        };
        match verdict {
            Ok(()) => out.episodes.push(episode),
            Err(reason) => {
                out.rejections.push(EpisodeRejection {
                    record: i,
                    id: episode.id,
                    reason,
                });
            }
        }
    }
    Ok(out)
}

pub fn episodes_to_json(episodes: &[Episode]) -> String {
    serde_json::to_string_pretty(episodes).expect("episodes serialize")
}
