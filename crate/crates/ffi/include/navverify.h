/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef NAVVERIFY_H
#define NAVVERIFY_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes. Zero is success.
typedef enum NvStatus {
  NV_STATUS_OK = 0,
  NV_STATUS_NULL_ARGUMENT = 1,
  NV_STATUS_INVALID_UTF8 = 2,
  NV_STATUS_INVALID_INPUT = 3,
  NV_STATUS_PARSE_FAILED = 4,
  NV_STATUS_BACKEND_FAILED = 5,
  NV_STATUS_AGENT_FAILED = 6,
  NV_STATUS_PANIC = 7,
} NvStatus;

// Graph document formats accepted by [`nv_graph_load`].
typedef enum NvGraphFormat {
  NV_GRAPH_FORMAT_NATIVE = 0,
  NV_GRAPH_FORMAT_MATTERPORT = 1,
} NvGraphFormat;

// Opaque text-generation backend.
typedef struct NvBackend NvBackend;

// Opaque caption table.
typedef struct NvCaptions NvCaptions;

// Opaque viewpoint graph.
typedef struct NvGraph NvGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *nv_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string produced by this library and not yet freed.
void nv_string_free(char *s);

// Library version as a static string; do not free.
const char *nv_version(void);

// Parses a graph document.
//
// # Safety
// `json` must be a valid C string; `out` must be writable.
enum NvStatus nv_graph_load(const char *json, enum NvGraphFormat format, struct NvGraph **out);

// # Safety
// `graph` must be null or a handle from [`nv_graph_load`] not yet freed.
void nv_graph_free(struct NvGraph *graph);

// Number of viewpoints, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t nv_graph_viewpoint_count(const struct NvGraph *graph);

// Geodesic distance between two viewpoints.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum NvStatus nv_graph_shortest_path_length(const struct NvGraph *graph,
                                            const char *from,
                                            const char *to,
                                            double *out);

// Parses a `{key: caption}` document.
//
// # Safety
// `json` must be a valid C string; `out` must be writable.
enum NvStatus nv_captions_load(const char *json, struct NvCaptions **out);

// # Safety
// `captions` must be null or a live handle.
void nv_captions_free(struct NvCaptions *captions);

// Scripted backend from a script document (`{"entries": [...]}`).
//
// # Safety
// `script_json` must be a valid C string; `out` must be writable.
enum NvStatus nv_backend_scripted(const char *script_json, struct NvBackend **out);

// Simulated backend. `instructions_json` is a JSON array of every
// instruction the backend may see; `profile_json` may be null for defaults.
//
// # Safety
// `instructions_json` must be a valid C string, `profile_json` null or a
// valid C string, and `out` writable.
enum NvStatus nv_backend_simulated(const char *instructions_json,
                                   const char *profile_json,
                                   struct NvBackend **out);

// # Safety
// `backend` must be null or a live handle.
void nv_backend_free(struct NvBackend *backend);

// Renders the lettered observation at a viewpoint, e.g.
// `[A. stop, B. go forward to <a sofa>]`.
//
// # Safety
// Handles must be live, `viewpoint` a valid C string, `out` writable.
enum NvStatus nv_observation_render(const struct NvGraph *graph,
                                    const struct NvCaptions *captions,
                                    const char *viewpoint,
                                    double heading_deg,
                                    double elevation_deg,
                                    char **out);

// Parses one chain-of-thought output against the valid option letters
// (e.g. `"ABCD"`). On success `out` receives the triple as JSON; on
// [`NvStatus::ParseFailed`] it receives the structured error as JSON.
//
// # Safety
// `raw` and `letters` must be valid C strings; `out` writable.
enum NvStatus nv_parse_cot(const char *raw, const char *letters, bool strict, char **out);

// Argmax over verification totals with the TFV-then-earliest tie rules.
// `totals` and `tfv_scores` hold `n` entries in decoding order.
//
// # Safety
// Both arrays must hold `n` readable elements; `out_index` writable.
enum NvStatus nv_select_action(const uint32_t *totals,
                               const uint32_t *tfv_scores,
                               size_t n,
                               size_t *out_index);

// Runs one episode. `config_json` may be null for the default agent
// configuration. `out` receives the episode result as JSON; when the
// episode aborts, [`NvStatus::AgentFailed`] is returned and `out` receives
// the partial result if there is one.
//
// # Safety
// Handles must be live, strings valid, `out` writable.
enum NvStatus nv_run_episode(const struct NvGraph *graph,
                             const struct NvCaptions *captions,
                             const struct NvBackend *backend,
                             const char *episode_json,
                             const char *config_json,
                             char **out);

// Metrics for a trajectory against a ground-truth path, both JSON arrays
// of viewpoint ids. `out` receives the metric record as JSON.
//
// # Safety
// `graph` must be live, strings valid, `out` writable.
enum NvStatus nv_metrics(const struct NvGraph *graph,
                         const char *trajectory_json,
                         const char *gt_path_json,
                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAVVERIFY_H */
