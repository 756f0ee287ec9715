#ifndef REGION_TEMPLATES_H
#define REGION_TEMPLATES_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_ARGUMENT = 1,
  RT_STATUS_INVALID_ARGUMENT = 2,
  RT_STATUS_NOT_FOUND = 3,
  RT_STATUS_NOT_OCCUPIED = 4,
  RT_STATUS_IO = 5,
  RT_STATUS_CONFIG = 6,
  RT_STATUS_DECODE = 7,
  RT_STATUS_BUFFER_TOO_SMALL = 8,
  RT_STATUS_PANIC = 9,
} RtStatus;

/**
 * In-memory staging store sharded along a Hilbert curve.
 */
typedef struct RtDms RtDms;

/**
 * Outcome of one simulated run.
 */
typedef struct RtSimResult RtSimResult;

typedef struct RtMetrics {
  double makespan;
  double cpu_busy;
  double gpu_busy;
  size_t cpu_slots;
  size_t gpu_slots;
  size_t stages;
  size_t tasks;
  size_t gpu_tasks;
  uint64_t transfer_bytes;
  uint64_t staged_bytes;
  uint64_t read_bytes;
  uint64_t sessions;
  uint64_t flushed_buffers;
} RtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *rt_last_error(void);

/**
 * Hilbert index of `coords[0..dims]` on a curve of side `2^order`.
 *
 * # Safety
 * `coords` must point to `dims` values and `out` to one writable value.
 */
enum RtStatus rt_sfc_encode(uint32_t dims, uint32_t order, const uint64_t *coords, uint64_t *out);

/**
 * Inverse of [`rt_sfc_encode`]; writes `dims` coordinates.
 *
 * # Safety
 * `coords_out` must point to `dims` writable values.
 */
enum RtStatus rt_sfc_decode(uint32_t dims, uint32_t order, uint64_t index, uint64_t *coords_out);

/**
 * Create a memory store over the box `[lo, hi]` with one curve cell per
 * `cell_extent` block. Only 2 and 3 axes are supported.
 *
 * # Safety
 * `lo`, `hi` and `cell_extent` must point to `dims` values; `out` to one
 * writable pointer.
 */
enum RtStatus rt_dms_new(size_t dims,
                         const int64_t *lo,
                         const int64_t *hi,
                         const int64_t *cell_extent,
                         size_t shards,
                         struct RtDms **out);

/**
 * # Safety
 * `dms` must come from [`rt_dms_new`] and not be used afterwards. NULL is
 * ignored.
 */
void rt_dms_free(struct RtDms *dms);

/**
 * Stage a dense f32 region named `key` covering `[lo, hi]`. `data` holds
 * `len` values in row-major order and `len` must equal the box volume.
 * `origin` is the shard that keeps the payload.
 *
 * # Safety
 * `dms` must be a live handle, `key` a NUL-terminated string, `lo`/`hi`
 * `dims` values each and `data` `len` values.
 */
enum RtStatus rt_dms_stage_f32(const struct RtDms *dms,
                               const char *key,
                               size_t dims,
                               const int64_t *lo,
                               const int64_t *hi,
                               const float *data,
                               size_t len,
                               size_t origin);

/**
 * Read the latest staged values of `key` over `[lo, hi]` into `out`, which
 * must hold at least the box volume.
 *
 * # Safety
 * As for [`rt_dms_stage_f32`]; `out` must point to `len` writable values.
 */
enum RtStatus rt_dms_read_f32(const struct RtDms *dms,
                              const char *key,
                              size_t dims,
                              const int64_t *lo,
                              const int64_t *hi,
                              float *out,
                              size_t len);

/**
 * Drop every staged version of `key`. Deleting an absent key succeeds.
 *
 * # Safety
 * `dms` must be a live handle and `key` a NUL-terminated string.
 */
enum RtStatus rt_dms_delete(const struct RtDms *dms, const char *key);

/**
 * Simulate the run described by the TOML config at `config_path`, the same
 * file `rtsim run` takes. Nothing is written to the output directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string and `out` point to one
 * writable pointer.
 */
enum RtStatus rt_sim_run(const char *config_path, struct RtSimResult **out);

/**
 * # Safety
 * `result` must be a live handle and `out` point to one writable struct.
 */
enum RtStatus rt_sim_metrics(const struct RtSimResult *result, struct RtMetrics *out);

/**
 * The run's trace as tab-separated text, owned by `result`. NULL if
 * `result` is NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
const char *rt_sim_trace(const struct RtSimResult *result);

/**
 * # Safety
 * `result` must come from [`rt_sim_run`] and not be used afterwards. NULL
 * is ignored.
 */
void rt_sim_free(struct RtSimResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGION_TEMPLATES_H */
