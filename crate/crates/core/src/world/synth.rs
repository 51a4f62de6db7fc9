//! Seeded synthetic worlds for desk-scale experiments.
//!
//! Every viewpoint gets a distinct landmark. The caption of every view that
//! leads into a viewpoint names that landmark, and instructions list the
//! landmarks of the ground-truth route in order, so the landmark planted in
//! the next ground-truth view is always an instruction entity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{distance, view_angles, NavEdge, NavGraph, Viewpoint};
use super::{Episode, WorldError};
use crate::textualizer::CaptionStore;

/// Landmarks with pairwise-disjoint tokens. All appear in the bundled lexicon.
pub const SYNTH_LANDMARKS: &[&str] = &[
    "sofa", "fireplace", "piano", "bookshelf", "dining table", "refrigerator", "bathtub",
    "bed", "wardrobe", "mirror", "painting", "lamp", "armchair", "television", "sink",
    "toilet", "shower", "washing machine", "ottoman", "desk", "potted plant", "rug",
    "cabinet", "dresser", "chandelier", "vase", "clock", "bench", "curtain", "jukebox",
    "treadmill", "counter", "stove", "microwave", "oven", "fountain", "statue", "aquarium",
    "balcony", "pantry", "laundry basket", "ironing board", "coat rack", "umbrella stand",
    "guitar", "drum kit", "crib", "trash can", "globe", "telescope", "bar stool",
    "harp", "towel", "doormat", "radiator", "column", "archway", "closet", "printer",
    "computer", "speaker", "candle",
];

const OPENERS: &[&str] = &["Walk to the", "Go toward the", "Head past the", "Move to the"];
const MIDDLES: &[&str] = &["then continue to the", "then pass the", "then head for the"];
const CLOSERS: &[&str] = &["and stop at the", "and wait by the", "and stop next to the"];

const MIN_SEPARATION: f64 = 4.0;
const FLOOR_HEIGHT: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub viewpoints: usize,
    pub branching: usize,
    pub episodes: usize,
    pub min_hops: usize,
    pub max_hops: usize,
}

impl SynthConfig {
    pub fn new(seed: u64, viewpoints: usize, branching: usize) -> Self {
        Self {
            seed,
            viewpoints,
            branching,
            episodes: viewpoints,
            min_hops: 2,
            max_hops: 4,
        }
    }

    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.episodes = episodes;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub scan: String,
    pub graph: NavGraph,
    pub episodes: Vec<Episode>,
    pub captions: CaptionStore,
    /// Landmark per viewpoint id.
    pub landmarks: Vec<(String, String)>,
}

impl SynthWorld {
    pub fn landmark_of(&self, viewpoint: &str) -> Option<&str> {
        self.landmarks
            .iter()
            .find(|(id, _)| id == viewpoint)
            .map(|(_, l)| l.as_str())
    }
}

pub fn synth_world(config: &SynthConfig) -> Result<SynthWorld, WorldError> {
    let n = config.viewpoints;
    if n < 2 || n > SYNTH_LANDMARKS.len() {
        return Err(WorldError::OutOfRange(format!(
            "viewpoints must be in [2, {}], got {n}",
            SYNTH_LANDMARKS.len()
        )));
    }
    if config.branching == 0 || config.branching > 8 {
        return Err(WorldError::OutOfRange(format!(
            "branching must be in [1, 8], got {}",
            config.branching
        )));
    }
    if config.min_hops == 0 || config.min_hops > config.max_hops {
        return Err(WorldError::OutOfRange(format!(
            "hop bounds [{}, {}] are invalid",
            config.min_hops, config.max_hops
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scan = format!("synth{}", config.seed);

    let positions = place_points(&mut rng, n);
    let mut names: Vec<&str> = SYNTH_LANDMARKS.to_vec();
    names.shuffle(&mut rng);
    let ids: Vec<String> = (0..n).map(|i| format!("vp{i:03}")).collect();

    let mut pairs = Vec::new();
    let link = |a: usize, b: usize, pairs: &mut Vec<(usize, usize)>| {
        let key = (a.min(b), a.max(b));
        if !pairs.contains(&key) {
            pairs.push(key);
        }
    };
    for i in 1..n {
        let nearest = (0..i)
            .min_by(|&a, &b| {
                distance(positions[i], positions[a]).total_cmp(&distance(positions[i], positions[b]))
            })
            .expect("i >= 1");
        link(i, nearest, &mut pairs);
    }
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            distance(positions[i], positions[a]).total_cmp(&distance(positions[i], positions[b]))
        });
        for &j in others.iter().take(config.branching) {
            link(i, j, &mut pairs);
        }
    }
    pairs.sort_unstable();

    let viewpoints: Vec<Viewpoint> = ids
        .iter()
        .zip(&positions)
        .map(|(id, &position)| Viewpoint { id: id.clone(), position })
        .collect();
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    let mut captions = CaptionStore::default();
    for &(a, b) in &pairs {
        for (from, to) in [(a, b), (b, a)] {
            let (heading, elevation) = view_angles(positions[from], positions[to]);
            let caption_key = format!("{scan}/{}_{}", ids[from], ids[to]);
            captions.insert(caption_key.clone(), format!("a {}", names[to]));
            edges.push(NavEdge {
                from: ids[from].clone(),
                to: ids[to].clone(),
                heading,
                elevation,
                caption_key,
            });
        }
    }
    let graph = NavGraph::new(viewpoints, edges)?;

    let mut episodes = Vec::with_capacity(config.episodes);
    for e in 0..config.episodes {
        let path = pick_route(&mut rng, &graph, &ids, config)?;
        let landmarks: Vec<&str> = path[1..]
            .iter()
            .map(|id| names[ids.iter().position(|x| x == id).expect("known id")])
            .collect();
        let instruction = compose_instruction(&mut rng, &landmarks);
        episodes.push(Episode {
            id: format!("{scan}_{e:04}"),
            scan: scan.clone(),
            instruction,
            start: path[0].clone(),
            start_heading: f64::from(rng.random_range(0..12u32) * 30),
            gt_path: path,
        });
    }

    let landmarks = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), names[i].to_string()))
        .collect();
    Ok(SynthWorld {
        scan,
        graph,
        episodes,
        captions,
        landmarks,
    })
}

fn place_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    let mut side = 5.0 * (n as f64).sqrt() + 4.0;
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n);
    while points.len() < n {
        let mut placed = false;
        for _ in 0..2000 {
            let z = if rng.random_bool(0.2) { FLOOR_HEIGHT } else { 0.0 };
            let p = [
                round_cm(rng.random_range(0.0..side)),
                round_cm(rng.random_range(0.0..side)),
                z,
            ];
            if points.iter().all(|&q| distance(p, q) >= MIN_SEPARATION) {
                points.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            side *= 1.25;
        }
    }
    points
}

fn round_cm(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn pick_route(
    rng: &mut ChaCha8Rng,
    graph: &NavGraph,
    ids: &[String],
    config: &SynthConfig,
) -> Result<Vec<String>, WorldError> {
    let n = ids.len();
    let mut fallback = None;
    for _ in 0..500 {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let path = graph.shortest_path(&ids[a], &ids[b])?;
        let hops = path.len() - 1;
        if (config.min_hops..=config.max_hops).contains(&hops) {
            return Ok(path);
        }
        if fallback.as_ref().is_none_or(|f: &Vec<String>| hops <= config.max_hops && hops > f.len() - 1) {
            fallback = Some(path);
        }
    }
    Ok(fallback.expect("at least one route sampled"))
}

fn compose_instruction(rng: &mut ChaCha8Rng, landmarks: &[&str]) -> String {
    let pick = |rng: &mut ChaCha8Rng, options: &[&'static str]| options[rng.random_range(0..options.len())];
    match landmarks {
        [] => "Stop where you are.".to_string(),
        [only] => format!("{} {} and stop there.", pick(rng, OPENERS), only),
        [first, middle @ .., last] => {
            let mut parts = vec![format!("{} {}", pick(rng, OPENERS), first)];
            for m in middle {
                parts.push(format!("{} {}", pick(rng, MIDDLES), m));
            }
            parts.push(format!("{} {}", pick(rng, CLOSERS), last));
            format!("{}.", parts.join(", "))
        }
    }
}
