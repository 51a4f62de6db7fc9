//! Ground-truth chain-of-thought labels and training records derived from
//! expert trajectories.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::entities::{extract_entities, tokens, EntityExtractor, EntityList};
use super::prompt::{build_nav_prompt, render_history_lines, render_input_block};
use super::LabelError;
use crate::textualizer::{build_observation, CaptionProvider, DirectionThresholds, STOP_LETTER};
use crate::world::{Episode, NavGraph};

/// Scores how well an entity phrase describes a view.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, entity: &str, caption: &str) -> f64;
}

/// Number of distinct entity tokens that also occur in the caption.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlap;

impl SimilarityScorer for TokenOverlap {
    fn score(&self, entity: &str, caption: &str) -> f64 {
        let caption: HashSet<String> = tokens(caption).into_iter().map(|(_, _, t)| t).collect();
        let entity: HashSet<String> = tokens(entity).into_iter().map(|(_, _, t)| t).collect();
        entity.intersection(&caption).count() as f64
    }
}

/// Highest-scoring entity for the next view; ties go to the earlier entity.
pub fn gt_prediction_label(
    entities: &EntityList,
    next_view_caption: &str,
    scorer: &dyn SimilarityScorer,
) -> Result<String, LabelError> {
    let mut best: Option<(&String, f64)> = None;
    for entity in &entities.entities {
        let s = scorer.score(entity, next_view_caption);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((entity, s));
        }
    }
    best.map(|(e, _)| e.clone()).ok_or(LabelError::EmptyEntities)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotLabel {
    pub prediction_label: String,
    pub action_label: char,
    pub rendered: String,
}

impl CotLabel {
    pub fn new(prediction_label: impl Into<String>, action_label: char) -> Self {
        let prediction_label = prediction_label.into();
        let rendered = format!(
            "Prediction: {prediction_label}. View match: {action_label} matches the imagination. Action: {action_label}."
        );
        Self {
            prediction_label,
            action_label,
            rendered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingTask {
    Pred,
    Vm,
    Act,
    FullCot,
}

impl TrainingTask {
    pub const ALL: [TrainingTask; 4] = [Self::Pred, Self::Vm, Self::Act, Self::FullCot];

    fn question(self) -> &'static str {
        match self {
            Self::Pred => "Predict the landmark you expect to see next.",
            Self::Vm => "Select the option that best matches the expected landmark.",
            Self::Act => "Choose the option to execute next.",
            Self::FullCot => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub task: TrainingTask,
    pub input: String,
    pub target: String,
}

pub struct LabelContext<'a> {
    pub captions: &'a dyn CaptionProvider,
    pub scorer: &'a dyn SimilarityScorer,
    pub extractor: &'a EntityExtractor<'a>,
    pub thresholds: DirectionThresholds,
    pub example: &'a str,
}

/// Four records (one per task) for every decision along the ground-truth
/// path, the final one being the stop decision.
pub fn emit_training_examples(
    episode: &Episode,
    graph: &NavGraph,
    ctx: &LabelContext<'_>,
) -> Result<Vec<TrainingRecord>, LabelError> {
    let entities = extract_entities(&episode.instruction, ctx.extractor)?;
    let mut heading = episode.start_heading;
    let mut elevation = 0.0;
    let mut history: Vec<String> = Vec::new();
    let mut arrival_caption: Option<String> = None;
    let mut records = Vec::with_capacity(episode.gt_path.len() * 4);

    for (t, at) in episode.gt_path.iter().enumerate() {
        let observation = build_observation(graph, at, heading, elevation, ctx.captions, &ctx.thresholds)?;
        let next = episode.gt_path.get(t + 1);
        let (letter, next_caption) = match next {
            Some(next) => {
                let option = observation
                    .options
                    .iter()
                    .find(|o| o.edge.as_ref().is_some_and(|e| &e.to == next))
                    .ok_or_else(|| LabelError::NoMatchingEdge {
                        from: at.clone(),
                        to: next.clone(),
                    })?;
                let key = &option.edge.as_ref().expect("move option").caption_key;
                let caption = ctx
                    .captions
                    .caption(key)
                    .ok_or_else(|| LabelError::MissingCaption(key.clone()))?;
                (option.letter, Some((caption, option.clone())))
            }
            None => (STOP_LETTER, None),
        };

        let view_caption = match (&next_caption, &arrival_caption) {
            (Some((c, _)), _) => Some(c.as_str()),
            (None, Some(c)) => Some(c.as_str()),
            (None, None) => None,
        };
        let prediction = match view_caption {
            Some(c) => gt_prediction_label(&entities, c, ctx.scorer)?,
            None => entities.entities.last().cloned().ok_or(LabelError::EmptyEntities)?,
        };
        let label = CotLabel::new(prediction, letter);

        let history_text = render_history_lines(&history);
        let block = render_input_block(&episode.instruction, &observation.rendered, &history_text);
        for task in TrainingTask::ALL {
            let (input, target) = match task {
                TrainingTask::Pred => (
                    format!("{block}\nTask: {}\nOutput:", task.question()),
                    format!("Prediction: {}.", label.prediction_label),
                ),
                TrainingTask::Vm => (
                    format!("{block}\nTask: {}\nOutput:", task.question()),
                    format!("View match: {} matches the imagination.", label.action_label),
                ),
                TrainingTask::Act => (
                    format!("{block}\nTask: {}\nOutput:", task.question()),
                    format!("Action: {}.", label.action_label),
                ),
                TrainingTask::FullCot => (
                    build_nav_prompt(&episode.instruction, &observation, &history_text, ctx.example),
                    label.rendered.clone(),
                ),
            };
            records.push(TrainingRecord { task, input, target });
        }

        if let Some((caption, option)) = next_caption {
            let edge = option.edge.as_ref().expect("move option");
            heading = edge.heading;
            elevation = if option.direction.is_some_and(|d| d.is_vertical()) {
                edge.elevation
            } else {
                0.0
            };
            history.push(option.text.clone());
            arrival_caption = Some(caption);
        }
    }
    Ok(records)
}
