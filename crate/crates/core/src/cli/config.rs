use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::agent::AgentConfig;
use crate::backend::{HttpBackend, HttpConfig, Script, ScriptedBackend, SimulatedBackend, SimulationProfile, TextBackend};
use crate::textualizer::CaptionStore;
use crate::world::{load_episodes, synth_world, Episode, GraphFormat, GraphRegistry, NavGraph, SynthConfig};

/// Everything a run needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `PATH` or `SCAN=PATH`; without a scan name the file stem is used.
    pub graphs: Vec<String>,
    pub graph_format: GraphFormat,
    pub episodes: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    /// In-memory synthetic worlds, `SEED:VIEWPOINTS:BRANCHING:EPISODES`.
    pub synth: Vec<String>,
    /// `simulated`, `scripted:PATH`, `http`, or `http:URL`.
    pub backend: Option<String>,
    pub http: HttpConfig,
    pub simulation: SimulationProfile,
    pub agent: AgentConfig,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graphs: Vec::new(),
            graph_format: GraphFormat::Native,
            episodes: None,
            captions: None,
            synth: Vec::new(),
            backend: None,
            http: HttpConfig::default(),
            simulation: SimulationProfile::default(),
            agent: AgentConfig::default(),
            out: None,
            jobs: 1,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.episodes.as_mut().map(rebase);
        config.captions.as_mut().map(rebase);
        config.out.as_mut().map(rebase);
        for spec in &mut config.graphs {
            let (scan, file) = split_graph_spec(spec);
            let file = PathBuf::from(file);
            if file.is_relative() {
                let joined = base.join(file).display().to_string();
                *spec = match scan {
                    Some(scan) => format!("{scan}={joined}"),
                    None => joined,
                };
            }
        }
        if let Some(backend) = config.backend.as_mut() {
            if let Some(script) = backend.strip_prefix("scripted:") {
                let script = PathBuf::from(script);
                if script.is_relative() {
                    *backend = format!("scripted:{}", base.join(script).display());
                }
            }
        }
        Ok(config)
    }

    /// Fails fast, naming the first referenced input that does not exist.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let mut paths: Vec<PathBuf> = self
            .graphs
            .iter()
            .map(|g| PathBuf::from(split_graph_spec(g).1))
            .collect();
        paths.extend(self.episodes.iter().cloned());
        paths.extend(self.captions.iter().cloned());
        if let Some(script) = self.backend.as_deref().and_then(|b| b.strip_prefix("scripted:")) {
            paths.push(PathBuf::from(script));
        }
        for path in paths {
            if !path.is_file() {
                return Err(CliError::Input {
                    path,
                    message: "file not found".into(),
                });
            }
        }
        Ok(())
    }
}

fn split_graph_spec(spec: &str) -> (Option<&str>, &str) {
    match spec.split_once('=') {
        Some((scan, path)) if !scan.is_empty() && !scan.contains(['/', '\\']) => (Some(scan), path),
        _ => (None, spec),
    }
}

fn default_scan_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scan");
    stem.strip_suffix("_connectivity").unwrap_or(stem).to_string()
}

pub fn parse_synth_spec(spec: &str) -> Result<SynthConfig, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Config(format!("synth spec {spec:?} must be SEED:VIEWPOINTS:BRANCHING:EPISODES"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let seed = parts[0].parse().map_err(|_| bad())?;
    let n = parts[1].parse().map_err(|_| bad())?;
    let b = parts[2].parse().map_err(|_| bad())?;
    let e = parts[3].parse().map_err(|_| bad())?;
    Ok(SynthConfig::new(seed, n, b).with_episodes(e))
}

/// Graphs, episodes, and captions for one run.
pub struct Dataset {
    pub registry: GraphRegistry,
    pub episodes: Vec<Episode>,
    pub captions: CaptionStore,
}

impl Dataset {
    pub fn load(config: &RunConfig) -> Result<Self, CliError> {
        config.check_inputs()?;
        let mut registry = GraphRegistry::new();
        let mut episodes = Vec::new();
        let mut captions = CaptionStore::default();

        for spec in &config.graphs {
            let (scan, file) = split_graph_spec(spec);
            let path = Path::new(file);
            let reader = BufReader::new(File::open(path).map_err(|e| CliError::input(path, e))?);
            let graph = NavGraph::load(reader, config.graph_format).map_err(|e| CliError::input(path, e))?;
            registry.insert(scan.map_or_else(|| default_scan_name(path), str::to_string), graph);
        }
        if let Some(path) = &config.captions {
            let reader = BufReader::new(File::open(path).map_err(|e| CliError::input(path, e))?);
            captions = CaptionStore::load(reader).map_err(|e| CliError::input(path, e))?;
        }
        for spec in &config.synth {
            let world = synth_world(&parse_synth_spec(spec)?).map_err(|e| CliError::Config(e.to_string()))?;
            captions.merge(&world.captions);
            episodes.extend(world.episodes);
            registry.insert(world.scan, world.graph);
        }
        if let Some(path) = &config.episodes {
            let reader = BufReader::new(File::open(path).map_err(|e| CliError::input(path, e))?);
            let loaded = load_episodes(reader, &registry).map_err(|e| CliError::input(path, e))?;
            for r in &loaded.rejections {
                log::warn!("{}: rejected episode {} (record {}): {}", path.display(), r.id, r.record, r.reason);
            }
            episodes.extend(loaded.episodes);
        }
        if registry.is_empty() {
            return Err(CliError::Config("no graphs: pass --graph or --synth".into()));
        }
        Ok(Self {
            registry,
            episodes,
            captions,
        })
    }
}

pub fn build_backend(config: &RunConfig, episodes: &[Episode]) -> Result<Box<dyn TextBackend>, CliError> {
    let spec = config
        .backend
        .as_deref()
        .ok_or_else(|| CliError::Config("no backend: pass --backend".into()))?;
    match spec.split_once(':').unwrap_or((spec, "")) {
        ("simulated", "") => Ok(Box::new(SimulatedBackend::new(
            config.simulation,
            episodes.iter().map(|e| e.instruction.clone()),
        ))),
        ("scripted", path) if !path.is_empty() => {
            let path = Path::new(path);
            let file = File::open(path).map_err(|e| CliError::input(path, e))?;
            let script = Script::load(BufReader::new(file)).map_err(|e| CliError::input(path, e))?;
            Ok(Box::new(ScriptedBackend::from_script(script).map_err(|e| CliError::input(path, e))?))
        }
        ("http", rest) => {
            let mut http = config.http.clone();
            if !rest.is_empty() {
                http.base_url = rest.to_string();
            }
            Ok(Box::new(HttpBackend::new(http).map_err(CliError::Backend)?))
        }
        _ => Err(CliError::Config(format!(
            "unknown backend {spec:?}; expected simulated, scripted:PATH, http, or http:URL"
        ))),
    }
}
