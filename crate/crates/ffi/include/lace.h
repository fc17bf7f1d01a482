#ifndef LACE_H
#define LACE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum LaceStatus {
  LACE_STATUS_OK = 0,
  // A required pointer argument was null.
  LACE_STATUS_NULL_ARGUMENT = 1,
  // An argument was out of range or malformed.
  LACE_STATUS_INVALID_ARGUMENT = 2,
  // The request conflicts with the session's workflow or state.
  LACE_STATUS_CONFLICT = 3,
  // Unknown candidate or layer.
  LACE_STATUS_NOT_FOUND = 4,
  // A string argument was not valid UTF-8.
  LACE_STATUS_INVALID_UTF8 = 5,
  // Encoding, decoding or replay failed.
  LACE_STATUS_FAILED = 6,
  // The library panicked; the handle should be discarded.
  LACE_STATUS_PANIC = 7,
} LaceStatus;

// Opaque session handle.
typedef struct LaceSession LaceSession;

// Straight-alpha RGBA color.
typedef struct LaceRgba {
  uint8_t r;
  uint8_t g;
  uint8_t b;
  uint8_t a;
} LaceRgba;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or an empty string. The
// pointer stays valid until the next call into the library on this thread.
const char *lace_last_error(void);

// Library version as a static NUL-terminated string.
const char *lace_version(void);

// Creates a session. `workflow` is 1, 2 or 3. `cadence_ms` of 0 selects
// the default background cadence.
enum LaceStatus lace_session_create(uint32_t workflow,
                                    uint32_t width,
                                    uint32_t height,
                                    uint64_t seed,
                                    uint64_t cadence_ms,
                                    struct LaceSession **out);

// Rebuilds a session from its JSONL event log.
enum LaceStatus lace_session_from_log(const uint8_t *data, size_t len, struct LaceSession **out);

// Releases a session handle. Null is ignored.
void lace_session_free(struct LaceSession *handle);

enum LaceStatus lace_session_set_prompt(struct LaceSession *handle, const char *prompt);

enum LaceStatus lace_session_set_weight(struct LaceSession *handle, double weight);

// Explicit generation; writes the new candidate id.
enum LaceStatus lace_session_generate(struct LaceSession *handle, uint64_t *out_candidate);

enum LaceStatus lace_session_start_parallel(struct LaceSession *handle);

enum LaceStatus lace_session_stop_parallel(struct LaceSession *handle);

// Advances the virtual clock; writes how many background candidates
// were produced. `out_count` may be null.
enum LaceStatus lace_session_tick(struct LaceSession *handle, uint64_t now_ms, size_t *out_count);

// Imports a cached candidate as a new top layer; writes the layer id.
enum LaceStatus lace_session_import(struct LaceSession *handle,
                                    uint64_t candidate,
                                    uint64_t *out_layer);

enum LaceStatus lace_session_add_layer(struct LaceSession *handle, uint64_t *out_layer);

enum LaceStatus lace_session_brush(struct LaceSession *handle,
                                   uint64_t layer,
                                   int64_t x,
                                   int64_t y,
                                   uint32_t radius,
                                   struct LaceRgba color);

// Fills the inclusive rectangle `(x0, y0)-(x1, y1)`.
enum LaceStatus lace_session_fill(struct LaceSession *handle,
                                  uint64_t layer,
                                  int64_t x0,
                                  int64_t y0,
                                  int64_t x1,
                                  int64_t y1,
                                  struct LaceRgba color);

// Updates layer properties. A NaN `opacity`, a negative `visible` or a
// negative `index` leaves that property unchanged.
enum LaceStatus lace_session_layer_props(struct LaceSession *handle,
                                         uint64_t layer,
                                         double opacity,
                                         int32_t visible,
                                         int64_t index);

// Records a 1-7 rating. Measure codes: 0 ownership, 1 satisfaction,
// 2 usability, 3 expectation, 4 explainability, 5 art.
enum LaceStatus lace_session_rate(struct LaceSession *handle, uint32_t measure, int64_t score);

enum LaceStatus lace_session_clock(struct LaceSession *handle, uint64_t *out_ms);

enum LaceStatus lace_session_cache_size(struct LaceSession *handle, size_t *out_size);

// Pixel digest of the flattened canvas.
enum LaceStatus lace_session_flatten_digest(struct LaceSession *handle, uint64_t *out_digest);

// Latent digest of a cached candidate.
enum LaceStatus lace_session_candidate_latent_digest(struct LaceSession *handle,
                                                     uint64_t candidate,
                                                     uint64_t *out_digest);

// PNG of the flattened canvas.
enum LaceStatus lace_session_snapshot_png(struct LaceSession *handle,
                                          uint8_t **out_data,
                                          size_t *out_len);

// The event log as JSONL bytes.
enum LaceStatus lace_session_log_jsonl(struct LaceSession *handle,
                                       uint8_t **out_data,
                                       size_t *out_len);

// Releases a buffer returned by this library. Null is ignored.
void lace_buffer_free(uint8_t *data, size_t len);

// Digest of a tightly packed RGBA8 buffer of `width * height * 4` bytes.
enum LaceStatus lace_pixel_digest(const uint8_t *rgba,
                                  size_t len,
                                  uint32_t width,
                                  uint32_t height,
                                  uint64_t *out_digest);

// Runs a JSON replay script in-process and writes the final canvas
// digest.
enum LaceStatus lace_run_script_json(const char *script, uint64_t *out_digest);

// Lower-tail normal probability of `z`.
double lace_p_from_z(double z);

// Effect size `|z| / sqrt(n)`.
enum LaceStatus lace_effect_size_r(double z, size_t n, double *out_r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LACE_H */
