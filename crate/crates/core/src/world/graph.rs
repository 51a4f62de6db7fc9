use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::WorldError;

/// A node of the navigation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: String,
    /// Position in meters.
    #[serde(rename = "xyz")]
    pub position: [f64; 3],
}

/// A directed navigable connection between two viewpoints, carrying the
/// view direction the agent would face when taking it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEdge {
    pub from: String,
    pub to: String,
    /// Degrees in `[0, 360)`, clockwise from the +y axis.
    #[serde(rename = "heading_deg")]
    pub heading: f64,
    /// Degrees in `[-90, 90]`.
    #[serde(rename = "elevation_deg")]
    pub elevation: f64,
    pub caption_key: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    #[default]
    Native,
    MatterportConnectivity,
}

/// Immutable viewpoint graph. Edge order per source viewpoint is fixed at
/// construction (heading, then elevation, then target id).
#[derive(Debug, Clone, Default)]
pub struct NavGraph {
    viewpoints: Vec<Viewpoint>,
    edges: Vec<NavEdge>,
    index: HashMap<String, usize>,
    outgoing: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct NativeDoc {
    #[serde(default)]
    viewpoints: Vec<Value>,
    #[serde(default)]
    edges: Vec<Value>,
}

#[derive(Serialize)]
struct NativeDocOut<'a> {
    viewpoints: &'a [Viewpoint],
    edges: &'a [NavEdge],
}

impl NavGraph {
    /// Builds a graph, validating every invariant. Edges repeated on the same
    /// `(from, to)` pair keep their first occurrence.
    pub fn new(viewpoints: Vec<Viewpoint>, edges: Vec<NavEdge>) -> Result<Self, WorldError> {
        let mut index = HashMap::with_capacity(viewpoints.len());
        for (i, vp) in viewpoints.iter().enumerate() {
            if vp.position.iter().any(|c| !c.is_finite()) {
                return Err(WorldError::InvalidRecord {
                    record: i,
                    reason: format!("viewpoint {} has a non-finite position", vp.id),
                });
            }
            if index.insert(vp.id.clone(), i).is_some() {
                return Err(WorldError::DuplicateViewpoint(vp.id.clone()));
            }
        }

        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        for (i, mut edge) in edges.into_iter().enumerate() {
            for end in [&edge.from, &edge.to] {
                if !index.contains_key(end) {
                    return Err(WorldError::DanglingEdge {
                        record: i,
                        viewpoint: end.clone(),
                    });
                }
            }
            if edge.from == edge.to {
                return Err(WorldError::InvalidRecord {
                    record: i,
                    reason: format!("self-loop on {}", edge.from),
                });
            }
            if !edge.heading.is_finite() || !edge.elevation.is_finite() {
                return Err(WorldError::InvalidRecord {
                    record: i,
                    reason: "non-finite heading or elevation".into(),
                });
            }
            if !(-90.0..=90.0).contains(&edge.elevation) {
                return Err(WorldError::InvalidRecord {
                    record: i,
                    reason: format!("elevation {} outside [-90, 90]", edge.elevation),
                });
            }
            edge.heading = normalize_heading(edge.heading);
            if seen.insert((edge.from.clone(), edge.to.clone())) {
                kept.push(edge);
            }
        }

        let mut outgoing = vec![Vec::new(); viewpoints.len()];
        for (i, edge) in kept.iter().enumerate() {
            outgoing[index[&edge.from]].push(i);
        }
        for list in &mut outgoing {
            list.sort_by(|&a, &b| option_order(&kept[a], &kept[b]));
        }

        Ok(Self {
            viewpoints,
            edges: kept,
            index,
            outgoing,
        })
    }

    pub fn load<R: Read>(source: R, format: GraphFormat) -> Result<Self, WorldError> {
        match format {
            GraphFormat::Native => Self::load_native(source),
            GraphFormat::MatterportConnectivity => super::matterport::load_connectivity(source),
        }
    }

    fn load_native<R: Read>(source: R) -> Result<Self, WorldError> {
        let doc: NativeDoc = serde_json::from_reader(source).map_err(|e| WorldError::Malformed {
            record: None,
            message: format!("line {}: {e}", e.line()),
        })?;
        let viewpoints = doc
            .viewpoints
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<Viewpoint>(v).map_err(|e| WorldError::Malformed {
                    record: Some(i),
                    message: format!("viewpoint: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges = doc
            .edges
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<NavEdge>(v).map_err(|e| WorldError::Malformed {
                    record: Some(i),
                    message: format!("edge: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(viewpoints, edges)
    }

    /// Native JSON document, pretty-printed.
    pub fn to_native_json(&self) -> String {
        let doc = NativeDocOut {
            viewpoints: &self.viewpoints,
            edges: &self.edges,
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    pub fn viewpoints(&self) -> &[Viewpoint] {
        &self.viewpoints
    }

    pub fn edges(&self) -> &[NavEdge] {
        &self.edges
    }

    pub fn viewpoint(&self, id: &str) -> Option<&Viewpoint> {
        self.index.get(id).map(|&i| &self.viewpoints[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Returns the edge `from -> to`, if any.
    pub fn edge(&self, from: &str, to: &str) -> Option<&NavEdge> {
        let i = *self.index.get(from)?;
        self.outgoing[i]
            .iter()
            .map(|&e| &self.edges[e])
            .find(|e| e.to == to)
    }

    /// Outgoing edges of `at` in option order.
    pub fn navigable_from(&self, at: &str) -> Result<Vec<&NavEdge>, WorldError> {
        let i = self.position_of(at)?;
        Ok(self.outgoing[i].iter().map(|&e| &self.edges[e]).collect())
    }

    pub fn euclidean(&self, a: &str, b: &str) -> Result<f64, WorldError> {
        let pa = self.viewpoints[self.position_of(a)?].position;
        let pb = self.viewpoints[self.position_of(b)?].position;
        Ok(distance(pa, pb))
    }

    /// Geodesic distance with Euclidean edge weights.
    pub fn shortest_path_length(&self, a: &str, b: &str) -> Result<f64, WorldError> {
        let target = self.position_of(b)?;
        let dist = self.distances_from(a)?;
        dist[target].ok_or_else(|| WorldError::Unreachable {
            from: a.to_string(),
            to: b.to_string(),
        })
    }

    /// Viewpoint ids along one minimal-weight path from `a` to `b`, inclusive.
    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Vec<String>, WorldError> {
        let source = self.position_of(a)?;
        let target = self.position_of(b)?;
        let (dist, prev) = self.dijkstra(source);
        if dist[target].is_none() {
            return Err(WorldError::Unreachable {
                from: a.to_string(),
                to: b.to_string(),
            });
        }
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path
            .into_iter()
            .map(|i| self.viewpoints[i].id.clone())
            .collect())
    }

    /// Single-source geodesic distances, indexed like [`NavGraph::viewpoints`].
    /// `None` marks unreachable viewpoints.
    pub fn distances_from(&self, a: &str) -> Result<Vec<Option<f64>>, WorldError> {
        let source = self.position_of(a)?;
        Ok(self.dijkstra(source).0)
    }

    pub(crate) fn position_of(&self, id: &str) -> Result<usize, WorldError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| WorldError::UnknownViewpoint(id.to_string()))
    }

    fn dijkstra(&self, source: usize) -> (Vec<Option<f64>>, Vec<Option<usize>>) {
        let n = self.viewpoints.len();
        let mut dist: Vec<Option<f64>> = vec![None; n];
        let mut prev = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = Some(0.0);
        heap.push(HeapEntry {
            cost: 0.0,
            node: source,
        });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if dist[node].is_some_and(|d| cost > d) {
                continue;
            }
            for &e in &self.outgoing[node] {
                let edge = &self.edges[e];
                let next = self.index[&edge.to];
                let w = distance(self.viewpoints[node].position, self.viewpoints[next].position);
                let candidate = cost + w;
                if dist[next].is_none_or(|d| candidate < d) {
                    dist[next] = Some(candidate);
                    prev[next] = Some(node);
                    heap.push(HeapEntry {
                        cost: candidate,
                        node: next,
                    });
                }
            }
        }
        (dist, prev)
    }
}

/// Min-heap entry for Dijkstra.
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn option_order(a: &NavEdge, b: &NavEdge) -> Ordering {
    a.heading
        .total_cmp(&b.heading)
        .then_with(|| a.elevation.total_cmp(&b.elevation))
        .then_with(|| a.to.cmp(&b.to))
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Heading (clockwise from +y) and elevation, in degrees, looking from `a` toward `b`.
pub fn view_angles(a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = b[2] - a[2];
    let heading = normalize_heading(dx.atan2(dy).to_degrees());
    let elevation = dz.atan2((dx * dx + dy * dy).sqrt()).to_degrees();
    (heading, elevation)
}
