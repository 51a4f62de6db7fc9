use crate::textualizer::ObservationDescription;

/// First line of every navigation prompt; also used to recognize them.
pub const NAV_PREAMBLE: &str = "You are a navigation agent following a natural-language instruction \
through an indoor environment. At every step, reason in three parts: Prediction (the landmark you \
expect to see next), View match (the option that supports the prediction), and Action (the option \
to execute).";

/// Bundled in-context example.
pub const DEFAULT_EXAMPLE: &str = "Input: Instruction: Walk past the sofa and stop at the bathroom door. \
Observation: [A. stop, B. go forward to <a sofa>, C. turn right to <a bathroom door>]. \
History: Step 1. go forward to <a sofa>.\n\
Output: Prediction: bathroom door. View match: C supports the prediction. Action: C.";

pub const EMPTY_HISTORY: &str = "none";

/// `Step i. <option text>` lines, 1-based; `none` when empty.
pub fn render_history_lines<S: AsRef<str>>(lines: &[S]) -> String {
    if lines.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Step {}. {}", i + 1, text.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn history_or_none(history: &str) -> &str {
    if history.trim().is_empty() {
        EMPTY_HISTORY
    } else {
        history
    }
}

/// The `Input:` block shared by navigation and training prompts.
pub fn render_input_block(instruction: &str, observation: &str, history: &str) -> String {
    format!(
        "Input: Instruction: {} Observation: {}. History: {}.",
        instruction.trim(),
        observation,
        history_or_none(history)
    )
}

pub fn build_nav_prompt(
    instruction: &str,
    observation: &ObservationDescription,
    history: &str,
    example: &str,
) -> String {
    format!(
        "{NAV_PREAMBLE}\n\nExample:\n{}\n\n{}\nOutput:",
        example.trim(),
        render_input_block(instruction, &observation.rendered, history)
    )
}

/// The `(instruction, observation, history)` fields of the last `Input:` block
/// of a navigation-style prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFields<'a> {
    pub instruction: &'a str,
    pub observation: &'a str,
    pub history: &'a str,
}

pub fn parse_input_block(prompt: &str) -> Option<InputFields<'_>> {
    let start = prompt.rfind("Input: Instruction: ")? + "Input: Instruction: ".len();
    let rest = &prompt[start..];
    let obs_at = rest.find(" Observation: [")?;
    let instruction = &rest[..obs_at];
    let rest = &rest[obs_at + " Observation: ".len()..];
    let hist_at = rest.find("]. History: ")?;
    let observation = &rest[..=hist_at];
    let rest = &rest[hist_at + "]. History: ".len()..];
    let end = rest.rfind('.')?;
    Some(InputFields {
        instruction,
        observation,
        history: &rest[..end],
    })
}
