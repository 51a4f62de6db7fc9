//! Importer for per-scan Matterport connectivity documents.
//!
//! Each record carries an `image_id`, a row-major 4x4 camera `pose`, an
//! `included` flag, and `unobstructed` adjacency flags indexed like the
//! record list. Image pointers and visibility flags are dropped.

use std::io::Read;

use serde_json::Value;

use super::graph::{view_angles, NavEdge, NavGraph, Viewpoint};
use super::WorldError;

const KNOWN_FIELDS: &[&str] = &["image_id", "pose", "included", "unobstructed", "visible", "height"];

struct Record {
    id: String,
    position: [f64; 3],
    included: bool,
    unobstructed: Vec<bool>,
}

pub(crate) fn load_connectivity<R: Read>(source: R) -> Result<NavGraph, WorldError> {
    let doc: Value = serde_json::from_reader(source).map_err(|e| WorldError::Malformed {
        record: None,
        message: format!("line {}: {e}", e.line()),
    })?;
    let items = doc.as_array().ok_or_else(|| WorldError::Malformed {
        record: None,
        message: "connectivity document must be a list".into(),
    })?;

    let mut records = Vec::with_capacity(items.len());
    let mut warned = false;
    for (i, item) in items.iter().enumerate() {
        let malformed = |message: &str| WorldError::Malformed {
            record: Some(i),
            message: message.to_string(),
        };
        let obj = item.as_object().ok_or_else(|| malformed("record is not an object"))?;
        if !warned {
            let unknown: Vec<&String> = obj.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())).collect();
            if !unknown.is_empty() {
                log::warn!("ignoring unsupported connectivity fields: {unknown:?}");
                warned = true;
            }
        }
        let id = obj
            .get("image_id")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing image_id"))?
            .to_string();
        let pose: Vec<f64> = obj
            .get("pose")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing pose"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| malformed("pose entry is not a number")))
            .collect::<Result<_, _>>()?;
        if pose.len() != 16 {
            return Err(malformed("pose must have 16 entries"));
        }
        let included = obj.get("included").and_then(Value::as_bool).unwrap_or(true);
        let unobstructed: Vec<bool> = obj
            .get("unobstructed")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing unobstructed"))?
            .iter()
            .map(|v| v.as_bool().ok_or_else(|| malformed("unobstructed entry is not a bool")))
            .collect::<Result<_, _>>()?;
        records.push(Record {
            id,
            position: [pose[3], pose[7], pose[11]],
            included,
            unobstructed,
        });
    }

    let mut viewpoints = Vec::new();
    let mut edges = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if !rec.included {
            continue;
        }
        if rec.unobstructed.len() != records.len() {
            return Err(WorldError::Malformed {
                record: Some(i),
                message: format!(
                    "unobstructed has {} flags for {} records",
                    rec.unobstructed.len(),
                    records.len()
                ),
            });
        }
        viewpoints.push(Viewpoint {
            id: rec.id.clone(),
            position: rec.position,
        });
        for (j, &open) in rec.unobstructed.iter().enumerate() {
            let other = &records[j];
            if !open || j == i || !other.included {
                continue;
            }
            let (heading, elevation) = view_angles(rec.position, other.position);
            edges.push(NavEdge {
                from: rec.id.clone(),
                to: other.id.clone(),
                heading,
                elevation,
                caption_key: format!("{}_{}", rec.id, other.id),
            });
        }
    }
    NavGraph::new(viewpoints, edges)
}
