#ifndef CHAINSIM_H
#define CHAINSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChainsimPolicy {
  CHAINSIM_POLICY_ALG1 = 0,
  CHAINSIM_POLICY_ALG2 = 1,
  CHAINSIM_POLICY_HEU = 2,
} ChainsimPolicy;

typedef enum ChainsimStatus {
  CHAINSIM_STATUS_OK = 0,
  CHAINSIM_STATUS_NULL_POINTER = 1,
  CHAINSIM_STATUS_INVALID_STRING = 2,
  CHAINSIM_STATUS_CONFIG = 3,
  CHAINSIM_STATUS_INVARIANT = 4,
  CHAINSIM_STATUS_IO = 5,
  CHAINSIM_STATUS_CONTRACT = 6,
  CHAINSIM_STATUS_INTERNAL = 7,
} ChainsimStatus;

/**
 * Opaque simulation handle.
 */
typedef struct ChainsimSim ChainsimSim;

/**
 * One completed slot.
 */
typedef struct ChainsimSlot {
  size_t t;
  double cost;
  double avg_cost;
  double backlog;
  bool truncated;
} ChainsimSlot;

/**
 * Bound constants of the configured platform.
 */
typedef struct ChainsimBounds {
  double b;
  double b1;
  double b2;
  double omega_input;
  double omega_output;
  double c;
} ChainsimBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *chainsim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *chainsim_version(void);

/**
 * Seven-VM reference scenario with the given policy, step size, seed and
 * horizon.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum ChainsimStatus chainsim_sim_reference(enum ChainsimPolicy policy,
                                           double epsilon,
                                           uint64_t seed,
                                           size_t horizon,
                                           struct ChainsimSim **out);

/**
 * Scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsimStatus chainsim_sim_from_toml(const char *toml, struct ChainsimSim **out);

/**
 * Scenario from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsimStatus chainsim_sim_from_file(const char *path, struct ChainsimSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from a `chainsim_sim_*` constructor and not be used again.
 */
void chainsim_sim_free(struct ChainsimSim *sim);

/**
 * Advances one slot. `out` may be null.
 *
 * # Safety
 * `sim` must be a live handle; `out` null or writable.
 */
enum ChainsimStatus chainsim_sim_step(struct ChainsimSim *sim, struct ChainsimSlot *out);

/**
 * Steps until the configured horizon is reached.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum ChainsimStatus chainsim_sim_run(struct ChainsimSim *sim);

/**
 * Slots completed so far.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t chainsim_sim_slot(const struct ChainsimSim *sim);

/**
 * Configured horizon.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t chainsim_sim_horizon(const struct ChainsimSim *sim);

/**
 * Current total backlog.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
double chainsim_sim_total_backlog(const struct ChainsimSim *sim);

/**
 * Entries per queue family, `chains * vnfs * vms`.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t chainsim_sim_queue_len(const struct ChainsimSim *sim);

/**
 * Copies the input and output backlogs, indexed `(chain * vnfs + vnf) * vms + vm`.
 *
 * # Safety
 * `input` and `output` must each hold `len` doubles; `len` must equal
 * `chainsim_sim_queue_len`.
 */
enum ChainsimStatus chainsim_sim_copy_queues(const struct ChainsimSim *sim,
                                             double *input,
                                             double *output,
                                             size_t len);

/**
 * Bound constants for the handle's platform and configuration.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum ChainsimStatus chainsim_sim_bounds(const struct ChainsimSim *sim, struct ChainsimBounds *out);

/**
 * Writes the slots stepped so far as a trace CSV.
 *
 * # Safety
 * `sim` must be a live handle; `path` a NUL-terminated string.
 */
enum ChainsimStatus chainsim_sim_write_trace(const struct ChainsimSim *sim, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINSIM_H */
