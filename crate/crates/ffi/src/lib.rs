//! C ABI for the navverify engine.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`NvStatus`]; on failure a message
//!   is available from [`nv_last_error`] on the same thread.
//! * Objects are opaque handles created by `nv_*_new`/`nv_*_load` functions
//!   and released with the matching `nv_*_free`.
//! * Strings passed in are NUL-terminated UTF-8. Strings handed out are owned
//!   by the caller and must be released with [`nv_string_free`].
//! * Structured values cross the boundary as JSON text.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use navverify::agent::{run_episode, AgentConfig};
use navverify::backend::{Script, ScriptedBackend, SimulatedBackend, SimulationProfile, TextBackend};
use navverify::cot::{parse_cot_with, ParseMode};
use navverify::metrics::{evaluate, MetricsConfig};
use navverify::textualizer::{build_observation, CaptionStore, DirectionThresholds};
use navverify::verify::{select_action, Candidate, VerificationTrace};
use navverify::world::{Episode, GraphFormat, NavGraph};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    ParseFailed = 4,
    BackendFailed = 5,
    AgentFailed = 6,
    Panic = 7,
}

/// Graph document formats accepted by [`nv_graph_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvGraphFormat {
    Native = 0,
    Matterport = 1,
}

/// Opaque viewpoint graph.
pub struct NvGraph(NavGraph);

/// Opaque caption table.
pub struct NvCaptions(CaptionStore);

/// Opaque text-generation backend.
pub struct NvBackend(Box<dyn TextBackend>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(NvStatus, String);

impl Failure {
    fn invalid(e: impl std::fmt::Display) -> Self {
        Self(NvStatus::InvalidInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NvStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NvStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NvStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NvStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(NvStatus::NullArgument, format!("{name} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(NvStatus::NullArgument, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    let c = CString::new(value).map_err(|_| Failure(NvStatus::InvalidInput, "output contains NUL".into()))?;
    put(out, c.into_raw(), "out")
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("values serialize")
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string produced by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn nv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a graph document.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nv_graph_load(json: *const c_char, format: NvGraphFormat, out: *mut *mut NvGraph) -> NvStatus {
    guard(|| {
        let doc = text(json, "json")?;
        let format = match format {
            NvGraphFormat::Native => GraphFormat::Native,
            NvGraphFormat::Matterport => GraphFormat::MatterportConnectivity,
        };
        let graph = NavGraph::load(doc.as_bytes(), format).map_err(Failure::invalid)?;
        put(out, Box::into_raw(Box::new(NvGraph(graph))), "out")
    })
}

/// # Safety
/// `graph` must be null or a handle from [`nv_graph_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nv_graph_free(graph: *mut NvGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of viewpoints, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nv_graph_viewpoint_count(graph: *const NvGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.viewpoints().len())
}

/// Geodesic distance between two viewpoints.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nv_graph_shortest_path_length(
    graph: *const NvGraph,
    from: *const c_char,
    to: *const c_char,
    out: *mut f64,
) -> NvStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let d = g
            .0
            .shortest_path_length(text(from, "from")?, text(to, "to")?)
            .map_err(Failure::invalid)?;
        put(out, d, "out")
    })
}

/// Parses a `{key: caption}` document.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nv_captions_load(json: *const c_char, out: *mut *mut NvCaptions) -> NvStatus {
    guard(|| {
        let store = CaptionStore::load(text(json, "json")?.as_bytes()).map_err(Failure::invalid)?;
        put(out, Box::into_raw(Box::new(NvCaptions(store))), "out")
    })
}

/// # Safety
/// `captions` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nv_captions_free(captions: *mut NvCaptions) {
    if !captions.is_null() {
        drop(Box::from_raw(captions));
    }
}

/// Scripted backend from a script document (`{"entries": [...]}`).
///
/// # Safety
/// `script_json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nv_backend_scripted(script_json: *const c_char, out: *mut *mut NvBackend) -> NvStatus {
    guard(|| {
        let backend_failed = |e: navverify::backend::BackendError| Failure(NvStatus::BackendFailed, e.to_string());
        let script = Script::load(text(script_json, "script_json")?.as_bytes()).map_err(backend_failed)?;
        let backend = ScriptedBackend::from_script(script).map_err(backend_failed)?;
        put(out, Box::into_raw(Box::new(NvBackend(Box::new(backend)))), "out")
    })
}

/// Simulated backend. `instructions_json` is a JSON array of every
/// instruction the backend may see; `profile_json` may be null for defaults.
///
/// # Safety
/// `instructions_json` must be a valid C string, `profile_json` null or a
/// valid C string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_backend_simulated(
    instructions_json: *const c_char,
    profile_json: *const c_char,
    out: *mut *mut NvBackend,
) -> NvStatus {
    guard(|| {
        let instructions: Vec<String> =
            serde_json::from_str(text(instructions_json, "instructions_json")?).map_err(Failure::invalid)?;
        let profile: SimulationProfile = if profile_json.is_null() {
            SimulationProfile::default()
        } else {
            serde_json::from_str(text(profile_json, "profile_json")?).map_err(Failure::invalid)?
        };
        let backend = SimulatedBackend::new(profile, instructions);
        put(out, Box::into_raw(Box::new(NvBackend(Box::new(backend)))), "out")
    })
}

/// # Safety
/// `backend` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nv_backend_free(backend: *mut NvBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Renders the lettered observation at a viewpoint, e.g.
/// `[A. stop, B. go forward to <a sofa>]`.
///
/// # Safety
/// Handles must be live, `viewpoint` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_observation_render(
    graph: *const NvGraph,
    captions: *const NvCaptions,
    viewpoint: *const c_char,
    heading_deg: f64,
    elevation_deg: f64,
    out: *mut *mut c_char,
) -> NvStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let c = handle(captions, "captions")?;
        let obs = build_observation(
            &g.0,
            text(viewpoint, "viewpoint")?,
            heading_deg,
            elevation_deg,
            &c.0,
            &DirectionThresholds::default(),
        )
        .map_err(Failure::invalid)?;
        put_string(out, obs.rendered)
    })
}

/// Parses one chain-of-thought output against the valid option letters
/// (e.g. `"ABCD"`). On success `out` receives the triple as JSON; on
/// [`NvStatus::ParseFailed`] it receives the structured error as JSON.
///
/// # Safety
/// `raw` and `letters` must be valid C strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_parse_cot(
    raw: *const c_char,
    letters: *const c_char,
    strict: bool,
    out: *mut *mut c_char,
) -> NvStatus {
    guard(|| {
        let letters: Vec<char> = text(letters, "letters")?.chars().collect();
        let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
        match parse_cot_with(text(raw, "raw")?, &letters, mode) {
            Ok(triple) => put_string(out, json(&triple)),
            Err(e) => {
                put_string(out, json(&e))?;
                Err(Failure(NvStatus::ParseFailed, e.to_string()))
            }
        }
    })
}

/// Argmax over verification totals with the TFV-then-earliest tie rules.
/// `totals` and `tfv_scores` hold `n` entries in decoding order.
///
/// # Safety
/// Both arrays must hold `n` readable elements; `out_index` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_select_action(
    totals: *const u32,
    tfv_scores: *const u32,
    n: usize,
    out_index: *mut usize,
) -> NvStatus {
    guard(|| {
        if n == 0 {
            return Err(Failure(NvStatus::InvalidInput, "no candidates".into()));
        }
        if totals.is_null() || tfv_scores.is_null() {
            return Err(Failure(NvStatus::NullArgument, "score array is null".into()));
        }
        let totals = std::slice::from_raw_parts(totals, n);
        let tfv = std::slice::from_raw_parts(tfv_scores, n);
        let candidates: Vec<Candidate> = (0..n)
            .map(|index| Candidate {
                index,
                cot: navverify::cot::CotTriple {
                    prediction: String::new(),
                    view_match: 'A',
                    action: 'A',
                    raw: String::new(),
                },
            })
            .collect();
        let traces: Vec<VerificationTrace> = (0..n)
            .map(|i| {
                let mut t = VerificationTrace::from_outcomes(i, Vec::new(), Vec::new());
                t.tfv_score = tfv[i] as usize;
                t.total = totals[i] as usize;
                t
            })
            .collect();
        let chosen = select_action(&candidates, &traces).map_err(Failure::invalid)?;
        put(out_index, chosen.index, "out_index")
    })
}

/// Runs one episode. `config_json` may be null for the default agent
/// configuration. `out` receives the episode result as JSON; when the
/// episode aborts, [`NvStatus::AgentFailed`] is returned and `out` receives
/// the partial result if there is one.
///
/// # Safety
/// Handles must be live, strings valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_run_episode(
    graph: *const NvGraph,
    captions: *const NvCaptions,
    backend: *const NvBackend,
    episode_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> NvStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let c = handle(captions, "captions")?;
        let b = handle(backend, "backend")?;
        let episode: Episode = serde_json::from_str(text(episode_json, "episode_json")?).map_err(Failure::invalid)?;
        let config: AgentConfig = if config_json.is_null() {
            AgentConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?).map_err(Failure::invalid)?
        };
        match run_episode(&g.0, &episode, &config, b.0.as_ref(), &c.0) {
            Ok(result) => put_string(out, json(&result)),
            Err(e) => {
                if let Some(partial) = e.partial() {
                    put_string(out, json(partial))?;
                }
                let status = if e.partial().is_some() {
                    NvStatus::AgentFailed
                } else {
                    NvStatus::InvalidInput
                };
                Err(Failure(status, e.to_string()))
            }
        }
    })
}

/// Metrics for a trajectory against a ground-truth path, both JSON arrays
/// of viewpoint ids. `out` receives the metric record as JSON.
///
/// # Safety
/// `graph` must be live, strings valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nv_metrics(
    graph: *const NvGraph,
    trajectory_json: *const c_char,
    gt_path_json: *const c_char,
    out: *mut *mut c_char,
) -> NvStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let trajectory: Vec<String> =
            serde_json::from_str(text(trajectory_json, "trajectory_json")?).map_err(Failure::invalid)?;
        let gt: Vec<String> = serde_json::from_str(text(gt_path_json, "gt_path_json")?).map_err(Failure::invalid)?;
        let record = evaluate(&g.0, &trajectory, &gt, &MetricsConfig::default()).map_err(Failure::invalid)?;
        put_string(out, json(&record))
    })
}
