use std::collections::{HashMap, VecDeque};
use std::io::Read;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{fingerprint, normalize_prompt, BackendError, BackendResponse, SamplingParams, TextBackend};

/// One script entry. Exactly one of `prompt` or `fingerprint` identifies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn load<R: Read>(source: R) -> Result<Self, BackendError> {
        serde_json::from_reader(source).map_err(|e| BackendError::Config(format!("script: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub seq: u64,
    pub fingerprint: String,
    pub prompt: String,
    pub params: SamplingParams,
    pub response: Option<String>,
}

#[derive(Debug, Default)]
struct State {
    queues: HashMap<String, VecDeque<String>>,
    log: Vec<CallRecord>,
    seq: u64,
}

/// Deterministic backend replaying queued responses per prompt fingerprint.
///
/// Calls are serialized internally; the call log is ordered by a monotone
/// sequence number.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    state: Mutex<State>,
}

impl ScriptedBackend {
    pub fn new(table: HashMap<String, Vec<String>>) -> Self {
        let queues = table.into_iter().map(|(k, v)| (k, v.into())).collect();
        Self {
            id: "scripted".into(),
            state: Mutex::new(State {
                queues,
                ..State::default()
            }),
        }
    }

    pub fn empty() -> Self {
        Self::new(HashMap::new())
    }

    pub fn from_script(script: Script) -> Result<Self, BackendError> {
        let backend = Self::empty();
        for (i, entry) in script.entries.into_iter().enumerate() {
            let key = match (entry.prompt, entry.fingerprint) {
                (Some(p), None) => fingerprint(&p),
                (None, Some(f)) => f,
                _ => {
                    return Err(BackendError::Config(format!(
                        "script entry {i} needs exactly one of prompt or fingerprint"
                    )))
                }
            };
            backend.push_fingerprint(key, entry.responses);
        }
        Ok(backend)
    }

    /// Appends responses to the queue of `prompt`.
    pub fn push<I, S>(&self, prompt: &str, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.push_fingerprint(fingerprint(prompt), responses);
    }

    pub fn with<I, S>(self, prompt: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.push(prompt, responses);
        self
    }

    fn push_fingerprint<I, S>(&self, key: String, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = self.state.lock().expect("scripted backend lock");
        state
            .queues
            .entry(key)
            .or_default()
            .extend(responses.into_iter().map(Into::into));
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.state.lock().expect("scripted backend lock").log.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("scripted backend lock").log.len()
    }

    /// Responses still queued across all fingerprints.
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("scripted backend lock");
        state.queues.values().map(VecDeque::len).sum()
    }
}

impl TextBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let key = fingerprint(prompt);
        let mut state = self.state.lock().expect("scripted backend lock");
        let outcome = match state.queues.get_mut(&key) {
            None => Err(BackendError::UnknownPrompt {
                normalized: normalize_prompt(prompt),
            }),
            Some(queue) => queue.pop_front().ok_or_else(|| BackendError::ScriptExhausted {
                fingerprint: key.clone(),
            }),
        };
        state.seq += 1;
        let seq = state.seq;
        state.log.push(CallRecord {
            seq,
            fingerprint: key,
            prompt: prompt.to_string(),
            params: *params,
            response: outcome.as_ref().ok().cloned(),
        });
        outcome.map(|text| BackendResponse {
            text,
            latency: Duration::ZERO,
            backend_id: self.id.clone(),
        })
    }
}

/// Wraps a backend and records every response so the session can be
/// replayed later through a [`ScriptedBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<Vec<(String, String)>>,
}

impl<B: TextBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    /// Responses grouped by fingerprint, in call order.
    pub fn script(&self) -> Script {
        let recorded = self.recorded.lock().expect("recorder lock");
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<String>> = HashMap::new();
        for (fp, text) in recorded.iter() {
            if !grouped.contains_key(fp) {
                order.push(fp.clone());
            }
            grouped.entry(fp.clone()).or_default().push(text.clone());
        }
        Script {
            entries: order
                .into_iter()
                .map(|fp| ScriptEntry {
                    responses: grouped.remove(&fp).unwrap_or_default(),
                    prompt: None,
                    fingerprint: Some(fp),
                })
                .collect(),
        }
    }
}

impl<B: TextBackend> TextBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        let response = self.inner.generate(prompt, params)?;
        self.recorded
            .lock()
            .expect("recorder lock")
            .push((fingerprint(prompt), response.text.clone()));
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookup() {
        let mut table = HashMap::new();
        table.insert(fingerprint("hello"), vec!["X".to_string()]);
        let b = ScriptedBackend::new(table);
        let r = b.generate("  hello ", &SamplingParams::default()).unwrap();
        assert_eq!(r.text, "X");
    }

    #[test]
    fn exhausted_queue_is_distinct_error() {
        let b = ScriptedBackend::empty().with("p", ["one"]);
        b.generate("p", &SamplingParams::default()).unwrap();
        assert!(matches!(
            b.generate("p", &SamplingParams::default()),
            Err(BackendError::ScriptExhausted { .. })
        ));
    }

    #[test]
    fn unknown_prompt_carries_normalized_text() {
        let b = ScriptedBackend::empty();
        match b.generate("what\n is  this", &SamplingParams::default()) {
            Err(BackendError::UnknownPrompt { normalized }) => assert_eq!(normalized, "what is this"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generate_n_preserves_queue_order() {
        let b = ScriptedBackend::empty().with("p", ["a", "b", "c"]);
        let texts: Vec<String> = b
            .generate_n("p", 3, &SamplingParams::default())
            .unwrap()
            .into_iter()
            .map(|r| r.text)
            .collect();
        assert_eq!(texts, ["a", "b", "c"]);
        let single = ScriptedBackend::empty().with("p", ["only"]);
        assert_eq!(single.generate_n("p", 1, &SamplingParams::default()).unwrap().len(), 1);
    }

    #[test]
    fn batch_failure_reports_index() {
        let b = ScriptedBackend::empty().with("p", ["a"]);
        match b.generate_n("p", 2, &SamplingParams::default()) {
            Err(BackendError::BatchFailed { index, source }) => {
                assert_eq!(index, 1);
                assert!(matches!(*source, BackendError::ScriptExhausted { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn call_log_is_sequenced() {
        let b = ScriptedBackend::empty().with("p", ["a", "b"]);
        b.generate("p", &SamplingParams::default()).unwrap();
        b.generate("p", &SamplingParams::greedy()).unwrap();
        let log = b.call_log();
        assert_eq!(log.iter().map(|c| c.seq).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(log[1].params.temperature, 0.0);
        assert_eq!(log[1].response.as_deref(), Some("b"));
    }

    #[test]
    fn script_round_trip_through_json() {
        let script = Script {
            entries: vec![ScriptEntry {
                prompt: Some("p".into()),
                fingerprint: None,
                responses: vec!["r".into()],
            }],
        };
        let loaded = Script::load(script.to_json().as_bytes()).unwrap();
        let b = ScriptedBackend::from_script(loaded).unwrap();
        assert_eq!(b.generate("p", &SamplingParams::default()).unwrap().text, "r");
    }

    #[test]
    fn recorder_replays() {
        let source = ScriptedBackend::empty().with("p", ["1", "2"]).with("q", ["3"]);
        let rec = RecordingBackend::new(source);
        rec.generate("p", &SamplingParams::default()).unwrap();
        rec.generate("q", &SamplingParams::default()).unwrap();
        rec.generate("p", &SamplingParams::default()).unwrap();
        let replay = ScriptedBackend::from_script(rec.script()).unwrap();
        assert_eq!(replay.generate("p", &SamplingParams::default()).unwrap().text, "1");
        assert_eq!(replay.generate("p", &SamplingParams::default()).unwrap().text, "2");
        assert_eq!(replay.generate("q", &SamplingParams::default()).unwrap().text, "3");
    }
}
