//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;

use navverify::agent::{render_history, AgentConfig};
use navverify::backend::{ScriptedBackend, SimulatedBackend, SimulationProfile};
use navverify::cot::{build_nav_prompt, extract_entities, parse_cot_with, EntityExtractor};
use navverify::textualizer::{build_observation, CaptionProvider, CaptionStore};
use navverify::verify::{build_mev_prompt, build_tfv_prompt, prepare_masks, Candidate, MaskedInstruction};
use navverify::world::{
    distance, load_episodes, synth_world, view_angles, Episode, GraphFormat, GraphRegistry, NavEdge, NavGraph,
    SynthConfig, Viewpoint,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub struct House {
    pub graph: NavGraph,
    pub registry: GraphRegistry,
    pub captions: CaptionStore,
    pub episodes: Vec<Episode>,
    pub rejected: Vec<String>,
}

impl House {
    pub fn episode(&self, id: &str) -> &Episode {
        self.episodes.iter().find(|e| e.id == id).expect("fixture episode")
    }
}

/// The five-viewpoint house: hall, living room, kitchen, bathroom and an
/// upstairs landing.
pub fn house() -> House {
    let graph = NavGraph::load(File::open(fixture("house5/house5.json")).unwrap(), GraphFormat::Native).unwrap();
    let mut registry = GraphRegistry::new();
    registry.insert("house5", graph.clone());
    let captions = CaptionStore::load(File::open(fixture("house5/captions.json")).unwrap()).unwrap();
    let load = load_episodes(File::open(fixture("house5/episodes.json")).unwrap(), &registry).unwrap();
    House {
        graph,
        registry,
        captions,
        episodes: load.episodes,
        rejected: load.rejections.into_iter().map(|r| r.id).collect(),
    }
}

pub struct Split {
    pub registry: GraphRegistry,
    pub episodes: Vec<Episode>,
    pub captions: CaptionStore,
}

impl Split {
    pub fn instructions(&self) -> Vec<String> {
        self.episodes.iter().map(|e| e.instruction.clone()).collect()
    }

    pub fn simulated(&self, profile: SimulationProfile) -> SimulatedBackend {
        SimulatedBackend::new(profile, self.instructions())
    }
}

/// `worlds` synthetic worlds with consecutive seeds starting at `seed`.
pub fn synthetic_split(seed: u64, worlds: u64, viewpoints: usize, branching: usize, episodes: usize) -> Split {
    let mut split = Split {
        registry: GraphRegistry::new(),
        episodes: Vec::new(),
        captions: CaptionStore::default(),
    };
    for s in seed..seed + worlds {
        let w = synth_world(&SynthConfig::new(s, viewpoints, branching).with_episodes(episodes)).unwrap();
        split.registry.insert(w.scan.clone(), w.graph);
        split.captions.merge(&w.captions);
        split.episodes.extend(w.episodes);
    }
    split
}

/// Graph from explicit positions and undirected links; view angles follow
/// the positions.
pub fn graph_from(points: &[[f64; 3]], links: &[(usize, usize)]) -> NavGraph {
    let id = |i: usize| format!("n{i}");
    let viewpoints = points
        .iter()
        .enumerate()
        .map(|(i, &p)| Viewpoint { id: id(i), position: p })
        .collect();
    let mut edges = Vec::new();
    for &(a, b) in links {
        for (f, t) in [(a, b), (b, a)] {
            let (heading, elevation) = view_angles(points[f], points[t]);
            edges.push(NavEdge {
                from: id(f),
                to: id(t),
                heading,
                elevation,
                caption_key: format!("{}_{}", id(f), id(t)),
            });
        }
    }
    NavGraph::new(viewpoints, edges).unwrap()
}

/// Shortest distance by enumerating every simple path. Exponential; only
/// for graphs of a handful of nodes.
pub fn brute_shortest(graph: &NavGraph, a: &str, b: &str) -> f64 {
    fn walk(graph: &NavGraph, at: &str, goal: &str, seen: &mut Vec<String>, so_far: f64, best: &mut f64) {
        if at == goal {
            *best = best.min(so_far);
            return;
        }
        for e in graph.navigable_from(at).unwrap() {
            if seen.contains(&e.to) {
                continue;
            }
            let leg = distance(graph.viewpoint(at).unwrap().position, graph.viewpoint(&e.to).unwrap().position);
            seen.push(e.to.clone());
            walk(graph, &e.to, goal, seen, so_far + leg, best);
            seen.pop();
        }
    }
    let mut best = f64::INFINITY;
    walk(graph, a, b, &mut vec![a.to_string()], 0.0, &mut best);
    best
}

/// Minimum DTW cost over every monotone alignment, enumerated explicitly.
pub fn brute_dtw(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let here = cost[i][j];
        let (n, m) = (cost.len(), cost[0].len());
        if i == n - 1 && j == m - 1 {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < n {
            best = best.min(go(cost, i + 1, j));
        }
        if j + 1 < m {
            best = best.min(go(cost, i, j + 1));
        }
        if i + 1 < n && j + 1 < m {
            best = best.min(go(cost, i + 1, j + 1));
        }
        here + best
    }
    go(cost, 0, 0)
}

/// Outcome plan for one verified timestep, indexed by the candidate's
/// decoding index (after unparseable samples are dropped).
pub struct Verdicts<'a> {
    pub tfv: &'a dyn Fn(usize, usize) -> bool,
    pub mev: &'a dyn Fn(usize, usize, usize) -> bool,
}

pub struct ScriptedStep {
    pub backend: ScriptedBackend,
    pub candidates: Vec<Candidate>,
    pub masks: Vec<MaskedInstruction>,
    /// Candidates that own verification queries (first of each raw text).
    pub distinct: usize,
}

/// Scripts the first timestep of `episode` exactly as the agent will issue
/// it: `nav` holds the K raw samples; verification answers follow `plan`.
pub fn script_first_step(
    graph: &NavGraph,
    captions: &dyn CaptionProvider,
    episode: &Episode,
    config: &AgentConfig,
    nav: &[String],
    plan: &Verdicts<'_>,
) -> ScriptedStep {
    let observation = build_observation(
        graph,
        &episode.start,
        episode.start_heading,
        0.0,
        captions,
        &config.thresholds,
    )
    .unwrap();
    let history = render_history(&[]);
    let backend = ScriptedBackend::empty();
    backend.push(
        &build_nav_prompt(&episode.instruction, &observation, &history, &config.example),
        nav.iter().cloned(),
    );

    let letters = observation.letters();
    let candidates: Vec<Candidate> = nav
        .iter()
        .filter_map(|raw| parse_cot_with(raw, &letters, config.parse_mode).ok())
        .enumerate()
        .map(|(index, cot)| Candidate { index, cot })
        .collect();
    let masks = if config.mev_enabled && config.masked_entities > 0 {
        let entities = extract_entities(&episode.instruction, &EntityExtractor::default()).unwrap();
        prepare_masks(&episode.instruction, config.masked_entities, &entities, &config.mask_token)
    } else {
        Vec::new()
    };

    let mut seen: Vec<&str> = Vec::new();
    for c in &candidates {
        if seen.contains(&c.cot.raw.as_str()) {
            continue;
        }
        seen.push(&c.cot.raw);
        let p = config.verification_samples;
        if config.tfv_enabled {
            let prompt = build_tfv_prompt(&episode.instruction, &history, &observation, c, config.candidate_view);
            backend.push(
                &prompt,
                (0..p).map(|i| if (plan.tfv)(c.index, i) { "True" } else { "False" }),
            );
        }
        if config.mev_enabled {
            for (r, m) in masks.iter().enumerate() {
                let prompt = build_mev_prompt(m, &history, &observation, c, config.candidate_view);
                backend.push(
                    &prompt,
                    (0..p).map(|i| {
                        if (plan.mev)(c.index, r, i) {
                            m.masked_entity.clone()
                        } else {
                            "nothing".to_string()
                        }
                    }),
                );
            }
        }
    }
    let distinct = seen.len();
    ScriptedStep {
        backend,
        candidates,
        masks,
        distinct,
    }
}
