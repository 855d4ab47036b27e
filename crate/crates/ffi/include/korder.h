#ifndef KORDER_H
#define KORDER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KorderStatus {
  KORDER_STATUS_OK = 0,
  // A result was produced but the solver did not converge.
  KORDER_STATUS_NOT_CONVERGED = 1,
  KORDER_STATUS_NULL_POINTER = 2,
  KORDER_STATUS_INVALID_ARGUMENT = 3,
  KORDER_STATUS_PARSE = 4,
  KORDER_STATUS_DIMENSION = 5,
  KORDER_STATUS_NUMERICAL = 6,
  KORDER_STATUS_BUFFER_TOO_SMALL = 7,
  KORDER_STATUS_PANIC = 8,
} KorderStatus;

// Layered parameter store with access log.
typedef struct KorderParams KorderParams;

// Motion problem ready to be solved.
typedef struct KorderProblem KorderProblem;

// Solver outcome.
typedef struct KorderResult KorderResult;

// Kinematic world.
typedef struct KorderWorld KorderWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on this thread.
const char *korder_last_error(void);

// Parses a world description (`chain`, `particle`, `shape`, `obstacle`,
// `limits`, `base`, `q` lines).
enum KorderStatus korder_world_parse(const char *text, struct KorderWorld **out);

// Joint-space dimension, or 0 for a null handle.
size_t korder_world_dim(const struct KorderWorld *world);

void korder_world_free(struct KorderWorld *world);

struct KorderParams *korder_params_new(void);

// Sets a command-line level override.
enum KorderStatus korder_params_set(struct KorderParams *params,
                                    const char *key,
                                    const char *value);

// Loads `key = value` lines as the config-file layer.
enum KorderStatus korder_params_load_text(struct KorderParams *params, const char *text);

// Writes the access log (`key = value # source` lines) as a NUL-terminated
// string into `buf`. `needed` receives the size including the terminator;
// returns `KORDER_STATUS_BUFFER_TOO_SMALL` when `capacity` is short.
enum KorderStatus korder_params_log(const struct KorderParams *params,
                                    char *buf,
                                    size_t capacity,
                                    size_t *needed);

void korder_params_free(struct KorderParams *params);

// The particle-around-walls benchmark with horizon `horizon` and order `k`.
enum KorderStatus korder_problem_particle(size_t horizon, size_t k, struct KorderProblem **out);

// The reaching problem built by `korder_move_to`, without solving it.
// `params` may be null for defaults; consulted keys are logged into it.
enum KorderStatus korder_problem_move_to(const struct KorderWorld *world,
                                         const char *endeff,
                                         const char *target,
                                         uint8_t align,
                                         struct KorderParams *params,
                                         struct KorderProblem **out);

// Horizon `T` and configuration dimension `n`; the trajectory has
// `(T+1)·n` values.
enum KorderStatus korder_problem_shape(const struct KorderProblem *problem,
                                       size_t *horizon,
                                       size_t *n);

void korder_problem_free(struct KorderProblem *problem);

// Solves with the Augmented Lagrangian from `x0` (`len = (T+1)·n` values),
// or from the last prefix configuration held constant when `x0` is null.
enum KorderStatus korder_solve_aula(const struct KorderProblem *problem,
                                    const double *x0,
                                    size_t len,
                                    struct KorderParams *params,
                                    struct KorderResult **out);

// Builds and solves the reaching problem, running `iterate` warm-restarted
// rounds. `params` may be null.
enum KorderStatus korder_move_to(const struct KorderWorld *world,
                                 const char *endeff,
                                 const char *target,
                                 uint8_t align,
                                 uint32_t iterate,
                                 struct KorderParams *params,
                                 struct KorderResult **out);

// Copies the trajectory (row-major `(T+1) × n`) into `buf`. `steps` and
// `n` receive the shape even when `capacity` is too small.
enum KorderStatus korder_result_trajectory(const struct KorderResult *result,
                                           double *buf,
                                           size_t capacity,
                                           size_t *steps,
                                           size_t *n);

// Objective `φᵀφ` at the returned trajectory; NaN for a null handle.
double korder_result_cost(const struct KorderResult *result);

// Largest constraint violation; NaN for a null handle.
double korder_result_max_violation(const struct KorderResult *result);

bool korder_result_converged(const struct KorderResult *result);

double korder_result_wall_time(const struct KorderResult *result);

// The result as JSON, NUL-terminated; see `korder_params_log` for the
// buffer protocol.
enum KorderStatus korder_result_json(const struct KorderResult *result,
                                     char *buf,
                                     size_t capacity,
                                     size_t *needed);

void korder_result_free(struct KorderResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KORDER_H */
