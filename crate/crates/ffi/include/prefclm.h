#ifndef PREFCLM_H
#define PREFCLM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrefclmStatus {
  PREFCLM_STATUS_OK = 0,
  PREFCLM_STATUS_NULL_ARGUMENT = 1,
  PREFCLM_STATUS_INVALID_UTF8 = 2,
  PREFCLM_STATUS_PARSE = 3,
  PREFCLM_STATUS_EVAL = 4,
  PREFCLM_STATUS_INVALID_CONFIG = 5,
  PREFCLM_STATUS_RUN = 6,
  PREFCLM_STATUS_FUSION = 7,
  PREFCLM_STATUS_JSON = 8,
  PREFCLM_STATUS_UNKNOWN_ENV = 9,
  PREFCLM_STATUS_PANIC = 10,
} PrefclmStatus;

/**
 * A parsed evaluation program.
 */
typedef struct PrefclmProgram PrefclmProgram;

/**
 * A training run driven step by step from the caller's thread.
 */
typedef struct PrefclmRun PrefclmRun;

/**
 * Fused masses for one pair.
 */
typedef struct PrefclmFusion {
  double m_s0;
  double m_s1;
  double m_both;
  double conflict;
  /**
   * 0, 0.5 or 1.
   */
  double label;
} PrefclmFusion;

/**
 * Library version, static storage.
 */
const char *prefclm_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *prefclm_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void prefclm_string_free(char *s);

/**
 * Parses `source` against the feature schema of `env_name`.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum PrefclmStatus prefclm_program_parse(const char *env_name,
                                         const char *source,
                                         struct PrefclmProgram **out);

/**
 * # Safety
 * `program` must be NULL or a handle from [`prefclm_program_parse`].
 */
void prefclm_program_free(struct PrefclmProgram *program);

/**
 * Scores one segment given as JSON (the library's `Segment` encoding).
 *
 * # Safety
 * `program` must be a live handle; `segment_json` NUL-terminated; `out` writable.
 */
enum PrefclmStatus prefclm_program_score(const struct PrefclmProgram *program,
                                         const char *segment_json,
                                         double *out);

/**
 * Canonical source text of a program.
 *
 * # Safety
 * `program` must be a live handle; `out` writable.
 */
enum PrefclmStatus prefclm_program_print(const struct PrefclmProgram *program, char **out);

/**
 * Dempster-Shafer fusion of `n` agents' scores for one pair.
 *
 * # Safety
 * `rho0` and `rho1` must point to `n` doubles; `out` writable.
 */
enum PrefclmStatus prefclm_fuse(const double *rho0,
                                const double *rho1,
                                size_t n,
                                double phi,
                                struct PrefclmFusion *out);

/**
 * Creates a run from a JSON config (missing fields take defaults).
 * `run_dir` may be NULL for a run without files.
 *
 * # Safety
 * Strings NUL-terminated (or `run_dir` NULL); `out` writable.
 */
enum PrefclmStatus prefclm_run_new(const char *config_json,
                                   const char *run_dir,
                                   struct PrefclmRun **out);

/**
 * Steps the run until `env_steps` reaches `target` (capped at the config's limit).
 *
 * # Safety
 * `run` must be a live handle.
 */
enum PrefclmStatus prefclm_run_advance(struct PrefclmRun *run, uint64_t target);

/**
 * Runs to the step limit and marks the run done.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum PrefclmStatus prefclm_run_finish(struct PrefclmRun *run);

/**
 * Refinement round with `feedback`; writes the new functions version.
 *
 * # Safety
 * `run` live; `feedback` NUL-terminated; `version_out` NULL or writable.
 */
enum PrefclmStatus prefclm_run_refine(struct PrefclmRun *run,
                                      const char *feedback,
                                      uint64_t *version_out);

/**
 * Current run state as JSON.
 *
 * # Safety
 * `run` live; `out` writable.
 */
enum PrefclmStatus prefclm_run_state_json(const struct PrefclmRun *run, char **out);

/**
 * Learning curve so far as CSV.
 *
 * # Safety
 * `run` live; `out` writable.
 */
enum PrefclmStatus prefclm_run_curve_csv(const struct PrefclmRun *run, char **out);

/**
 * # Safety
 * `run` must be NULL or a handle from [`prefclm_run_new`].
 */
void prefclm_run_free(struct PrefclmRun *run);

#endif  /* PREFCLM_H */
