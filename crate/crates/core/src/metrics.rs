//! Per-episode navigation metrics and split aggregates.
//!
//! Formulas:
//!
//! * NE: distance from the final viewpoint to the goal.
//! * TL: summed Euclidean length of the traversed edges.
//! * Success: `NE <= threshold` (3 m by default, inclusive).
//! * OSR: some visited viewpoint lies within the threshold of the goal.
//! * SPL: `success * L* / max(L*, TL)`, with `L*` the shortest start-goal
//!   distance; `L* = 0` with success counts as 1.
//! * nDTW: `exp(-DTW(R, Q) / (|R| * threshold))`, where DTW sums point
//!   distances along the cheapest monotone alignment of reference `R` and
//!   query `Q`.
//! * sDTW: `success * nDTW`.
//! * CLS: `PC * LS` where `PC = mean over r in R of exp(-d(r, Q) / threshold)`,
//!   `EPL = PC * PL(R)`, and `LS = EPL / (EPL + |EPL - PL(Q)|)`; when both
//!   `EPL` and `PL(Q)` are 0, `LS = 1`. `PL` is path length.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::world::{NavGraph, WorldError};

pub const SUCCESS_THRESHOLD_M: f64 = 3.0;

/// Point-to-point distance used by every metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Geodesic,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub threshold: f64,
    pub distance: DistanceMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold: SUCCESS_THRESHOLD_M,
            distance: DistanceMode::Geodesic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub tl: f64,
    pub ne: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
    pub cls: f64,
}

/// Memoizes single-source distances so repeated point lookups stay cheap.
pub struct Distances<'g> {
    graph: &'g NavGraph,
    mode: DistanceMode,
    cache: HashMap<String, Vec<Option<f64>>>,
}

impl<'g> Distances<'g> {
    pub fn new(graph: &'g NavGraph, mode: DistanceMode) -> Self {
        Self {
            graph,
            mode,
            cache: HashMap::new(),
        }
    }

    pub fn between(&mut self, a: &str, b: &str) -> Result<f64, WorldError> {
        match self.mode {
            DistanceMode::Euclidean => self.graph.euclidean(a, b),
            DistanceMode::Geodesic => {
                if !self.cache.contains_key(a) {
                    let row = self.graph.distances_from(a)?;
                    self.cache.insert(a.to_string(), row);
                }
                let index = self
                    .graph
                    .viewpoints()
                    .iter()
                    .position(|v| v.id == b)
                    .ok_or_else(|| WorldError::UnknownViewpoint(b.to_string()))?;
                self.cache[a][index].ok_or_else(|| WorldError::Unreachable {
                    from: a.to_string(),
                    to: b.to_string(),
                })
            }
        }
    }
}

fn last(trajectory: &[String]) -> Result<&str, WorldError> {
    trajectory
        .last()
        .map(String::as_str)
        .ok_or_else(|| WorldError::OutOfRange("empty trajectory".into()))
}

pub fn navigation_error(graph: &NavGraph, trajectory: &[String], goal: &str) -> Result<f64, WorldError> {
    graph.shortest_path_length(last(trajectory)?, goal)
}

pub fn success(ne: f64) -> bool {
    success_within(ne, SUCCESS_THRESHOLD_M)
}

pub fn success_within(ne: f64, threshold: f64) -> bool {
    ne <= threshold
}

pub fn oracle_success(graph: &NavGraph, trajectory: &[String], goal: &str) -> Result<bool, WorldError> {
    let mut d = Distances::new(graph, DistanceMode::Geodesic);
    oracle_with(&mut d, trajectory, goal, SUCCESS_THRESHOLD_M)
}

fn oracle_with(d: &mut Distances<'_>, trajectory: &[String], goal: &str, threshold: f64) -> Result<bool, WorldError> {
    last(trajectory)?;
    for v in trajectory {
        if d.between(v, goal)? <= threshold {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn spl(success: bool, shortest: f64, taken: f64) -> f64 {
    if !success {
        return 0.0;
    }
    if shortest <= 0.0 {
        return 1.0;
    }
    shortest / shortest.max(taken)
}

/// Summed Euclidean length of consecutive legs.
pub fn path_length(graph: &NavGraph, path: &[String]) -> Result<f64, WorldError> {
    path.windows(2).map(|w| graph.euclidean(&w[0], &w[1])).sum()
}

fn dtw(d: &mut Distances<'_>, reference: &[String], query: &[String]) -> Result<f64, WorldError> {
    let (n, m) = (reference.len(), query.len());
    let mut cost = vec![vec![f64::INFINITY; m + 1]; n + 1];
    cost[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = cost[i - 1][j].min(cost[i][j - 1]).min(cost[i - 1][j - 1]);
            cost[i][j] = d.between(&reference[i - 1], &query[j - 1])? + best;
        }
    }
    Ok(cost[n][m])
}

fn non_empty(path: &[String]) -> Result<(), WorldError> {
    last(path).map(|_| ())
}

pub fn ndtw(graph: &NavGraph, reference: &[String], query: &[String]) -> Result<f64, WorldError> {
    let mut d = Distances::new(graph, DistanceMode::Geodesic);
    ndtw_with(&mut d, reference, query, SUCCESS_THRESHOLD_M)
}

fn ndtw_with(d: &mut Distances<'_>, reference: &[String], query: &[String], threshold: f64) -> Result<f64, WorldError> {
    non_empty(reference)?;
    non_empty(query)?;
    let total = dtw(d, reference, query)?;
    Ok((-total / (reference.len() as f64 * threshold)).exp())
}

pub fn sdtw(success: bool, ndtw: f64) -> f64 {
    if success {
        ndtw
    } else {
        0.0
    }
}

pub fn cls(graph: &NavGraph, reference: &[String], query: &[String]) -> Result<f64, WorldError> {
    let mut d = Distances::new(graph, DistanceMode::Geodesic);
    cls_with(&mut d, graph, reference, query, SUCCESS_THRESHOLD_M)
}

fn cls_with(
    d: &mut Distances<'_>,
    graph: &NavGraph,
    reference: &[String],
    query: &[String],
    threshold: f64,
) -> Result<f64, WorldError> {
    non_empty(reference)?;
    non_empty(query)?;
    let mut coverage = 0.0;
    for r in reference {
        let mut nearest = f64::INFINITY;
        for q in query {
            nearest = nearest.min(d.between(r, q)?);
        }
        coverage += (-nearest / threshold).exp();
    }
    let pc = coverage / reference.len() as f64;
    let epl = pc * path_length(graph, reference)?;
    let pl = path_length(graph, query)?;
    let denom = epl + (epl - pl).abs();
    let ls = if denom == 0.0 { 1.0 } else { epl / denom };
    Ok(pc * ls)
}

/// All metrics for one trajectory against its ground-truth path.
pub fn evaluate(
    graph: &NavGraph,
    trajectory: &[String],
    gt_path: &[String],
    config: &MetricsConfig,
) -> Result<MetricRecord, WorldError> {
    let goal = last(gt_path)?;
    let start = trajectory
        .first()
        .ok_or_else(|| WorldError::OutOfRange("empty trajectory".into()))?;
    let mut d = Distances::new(graph, config.distance);
    let ne = d.between(last(trajectory)?, goal)?;
    let tl = path_length(graph, trajectory)?;
    let success = success_within(ne, config.threshold);
    let oracle_success = oracle_with(&mut d, trajectory, goal, config.threshold)?;
    let shortest = d.between(start, goal)?;
    let ndtw = ndtw_with(&mut d, gt_path, trajectory, config.threshold)?;
    let cls = cls_with(&mut d, graph, gt_path, trajectory, config.threshold)?;
    Ok(MetricRecord {
        tl,
        ne,
        success,
        oracle_success,
        spl: spl(success, shortest, tl),
        ndtw,
        sdtw: sdtw(success, ndtw),
        cls,
    })
}

/// Split means; `sr` and `osr` are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub episodes: usize,
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
    pub cls: f64,
}

pub fn aggregate(records: &[MetricRecord]) -> SplitSummary {
    let n = records.len();
    let mean = |f: &dyn Fn(&MetricRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let pct = |b: bool| if b { 100.0 } else { 0.0 };
    SplitSummary {
        episodes: n,
        tl: mean(&|r| r.tl),
        ne: mean(&|r| r.ne),
        sr: mean(&|r| pct(r.success)),
        osr: mean(&|r| pct(r.oracle_success)),
        spl: mean(&|r| r.spl),
        ndtw: mean(&|r| r.ndtw),
        sdtw: mean(&|r| r.sdtw),
        cls: mean(&|r| r.cls),
    }
}

const COLUMNS: [&str; 9] = ["N", "TL", "NE", "SR", "OSR", "SPL", "nDTW", "sDTW", "CLS"];

impl SplitSummary {
    fn cells(&self) -> [String; 9] {
        [
            self.episodes.to_string(),
            format!("{:.2}", self.tl),
            format!("{:.2}", self.ne),
            format!("{:.1}", self.sr),
            format!("{:.1}", self.osr),
            format!("{:.3}", self.spl),
            format!("{:.3}", self.ndtw),
            format!("{:.3}", self.sdtw),
            format!("{:.3}", self.cls),
        ]
    }
}

/// Right-aligned plain-text table, one row per labeled summary.
pub fn render_table(rows: &[(String, SplitSummary)]) -> String {
    let mut grid: Vec<Vec<String>> = vec![std::iter::once(String::new())
        .chain(COLUMNS.iter().map(|c| c.to_string()))
        .collect()];
    for (label, s) in rows {
        grid.push(std::iter::once(label.clone()).chain(s.cells()).collect());
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
