use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::{build_backend, Dataset, RunConfig};
use super::{CliError, SynthArgs};
use crate::agent::{run_split, AgentError, EpisodeResult};
use crate::cot::{emit_training_examples, EntityExtractor, LabelContext, TokenOverlap};
use crate::metrics::{aggregate, evaluate, render_table, MetricRecord, SplitSummary};
use crate::trace::{write_atomic, EpisodeTrace};
use crate::world::{episodes_to_json, synth_world, SynthConfig};

pub struct RunOutcome {
    pub results: Vec<Result<EpisodeResult, AgentError>>,
    pub summary: SplitSummary,
    pub failed: usize,
    pub trace_files: Vec<PathBuf>,
    pub table: String,
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::output(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes()).map_err(|e| CliError::output(path, e))
}

fn summarize(results: &[Result<EpisodeResult, AgentError>]) -> (SplitSummary, usize) {
    let records: Vec<MetricRecord> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().and_then(|r| r.metrics))
        .collect();
    (aggregate(&records), results.len() - records.len())
}

pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let data = Dataset::load(config)?;
    let backend = build_backend(config, &data.episodes)?;
    let results = run_split(
        &data.registry,
        &data.episodes,
        &config.agent,
        backend.as_ref(),
        &data.captions,
        config.jobs,
    );
    for (episode, result) in data.episodes.iter().zip(&results) {
        if let Err(e) = result {
            log::warn!("episode {}: {e}", episode.id);
        }
    }
    let (summary, failed) = summarize(&results);

    let mut trace_files = Vec::new();
    if let Some(out) = &config.out {
        let dir = out.join("traces");
        create_dir(&dir)?;
        for (episode, result) in data.episodes.iter().zip(&results) {
            let trace = EpisodeTrace::new(episode, &config.agent, backend.id(), result);
            let path = dir.join(trace.file_name());
            write_file(&path, &trace.to_jsonl())?;
            trace_files.push(path);
        }
        let doc = json!({ "summary": summary, "failed": failed });
        write_file(&out.join("summary.json"), &format!("{:#}\n", doc))?;
    }
    if failed > 0 && failed == results.len() {
        return Err(CliError::Run(format!("all {failed} episodes failed")));
    }
    let table = render_table(&[("split".to_string(), summary)]);
    Ok(RunOutcome {
        results,
        summary,
        failed,
        trace_files,
        table,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub p: usize,
    pub summary: SplitSummary,
    pub failed: usize,
}

/// One full evaluation per `(K, P)` pair, K-major.
pub fn cmd_sweep(config: &RunConfig, k_values: &[usize], p_values: &[usize]) -> Result<(Vec<SweepCell>, String), CliError> {
    if k_values.is_empty() || p_values.is_empty() {
        return Err(CliError::Config("sweep needs at least one K and one P".into()));
    }
    let data = Dataset::load(config)?;
    let backend = build_backend(config, &data.episodes)?;
    let mut cells = Vec::new();
    for &k in k_values {
        for &p in p_values {
            let mut agent = config.agent.clone();
            agent.num_candidates = k;
            agent.verification_samples = p;
            agent.keep_transcripts = false;
            agent.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let results = run_split(&data.registry, &data.episodes, &agent, backend.as_ref(), &data.captions, config.jobs);
            let (summary, failed) = summarize(&results);
            log::info!("K={k} P={p}: SR {:.1}", summary.sr);
            cells.push(SweepCell { k, p, summary, failed });
        }
    }
    let rows: Vec<(String, SplitSummary)> = cells
        .iter()
        .map(|c| (format!("K={} P={}", c.k, c.p), c.summary))
        .collect();
    let table = render_table(&rows);
    if let Some(out) = &config.out {
        create_dir(out)?;
        let doc = serde_json::to_string_pretty(&cells).expect("cells serialize");
        write_file(&out.join("sweep.json"), &format!("{doc}\n"))?;
    }
    Ok((cells, table))
}

/// First line of every training-record file.
pub const LABELS_HEADER: &str = r#"{"format":"navverify-training","version":1}"#;

pub fn cmd_labels(config: &RunConfig, out: &Path) -> Result<usize, CliError> {
    let data = Dataset::load(config)?;
    let extractor = EntityExtractor::default();
    let ctx = LabelContext {
        captions: &data.captions,
        scorer: &TokenOverlap,
        extractor: &extractor,
        thresholds: config.agent.thresholds,
        example: &config.agent.example,
    };
    let mut text = format!("{LABELS_HEADER}\n");
    let mut count = 0;
    for episode in &data.episodes {
        let graph = data
            .registry
            .graph_for(episode)
            .map_err(|e| CliError::Run(e.to_string()))?;
        let records = emit_training_examples(episode, graph, &ctx)
            .map_err(|e| CliError::Run(format!("episode {}: {e}", episode.id)))?;
        for record in &records {
            text.push_str(&serde_json::to_string(record).expect("records serialize"));
            text.push('\n');
        }
        count += records.len();
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(out, &text)?;
    Ok(count)
}

/// Writes `graphs/<scan>.json`, `captions.json`, and `episodes.json`.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<PathBuf>, CliError> {
    let graphs = args.out.join("graphs");
    create_dir(&graphs)?;
    let mut files = Vec::new();
    let mut episodes = Vec::new();
    let mut captions = crate::textualizer::CaptionStore::default();
    for i in 0..args.worlds {
        let config = SynthConfig::new(args.seed + i, args.viewpoints, args.branching).with_episodes(args.episodes);
        let world = synth_world(&config).map_err(|e| CliError::Config(e.to_string()))?;
        let path = graphs.join(format!("{}.json", world.scan));
        write_file(&path, &world.graph.to_native_json())?;
        files.push(path);
        captions.merge(&world.captions);
        episodes.extend(world.episodes);
    }
    let path = args.out.join("captions.json");
    write_file(&path, &captions.to_json())?;
    files.push(path);
    let path = args.out.join("episodes.json");
    write_file(&path, &episodes_to_json(&episodes))?;
    files.push(path);
    Ok(files)
}

/// Aggregates the metrics stored in every trace under `dir`. With graphs,
/// metrics are recomputed from the recorded trajectories and must match.
pub fn cmd_score(dir: &Path, graphs: Option<&RunConfig>, out: Option<&Path>) -> Result<String, CliError> {
    let traces_dir = if dir.join("traces").is_dir() { dir.join("traces") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&traces_dir)
        .map_err(|e| CliError::input(&traces_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let data = graphs.map(Dataset::load).transpose()?;

    let mut records = Vec::new();
    let mut failed = 0;
    for path in &paths {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let trace = EpisodeTrace::parse(&text).map_err(|e| CliError::input(path, e))?;
        if trace.to_jsonl() != text {
            return Err(CliError::input(path, "trace is not in canonical form"));
        }
        let Some(stored) = trace.result.metrics else {
            failed += 1;
            continue;
        };
        if let Some(data) = &data {
            let graph = data
                .registry
                .get(&trace.header.scan)
                .ok_or_else(|| CliError::input(path, format!("no graph for scan {}", trace.header.scan)))?;
            let recomputed = evaluate(
                graph,
                &trace.result.trajectory,
                &trace.header.gt_path,
                &trace.header.config.metrics,
            )
            .map_err(|e| CliError::input(path, e))?;
            if recomputed != stored {
                return Err(CliError::Run(format!(
                    "{}: stored metrics differ from recomputed ones",
                    path.display()
                )));
            }
        }
        records.push(stored);
    }
    let summary = aggregate(&records);
    if let Some(out) = out {
        let doc = json!({ "summary": summary, "failed": failed });
        write_file(out, &format!("{:#}\n", doc))?;
    }
    Ok(render_table(&[("traces".to_string(), summary)]))
}
