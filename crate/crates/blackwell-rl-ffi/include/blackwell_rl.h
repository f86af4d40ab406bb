#ifndef BLACKWELL_RL_H
#define BLACKWELL_RL_H

/* Generated by cbindgen from blackwell-rl-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible API call.
 */
typedef enum BrlStatus {
  BRL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BRL_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BRL_STATUS_INVALID_UTF8 = 2,
  /**
   * Arguments failed validation (bad sizes, unknown names, ...).
   */
  BRL_STATUS_INVALID_ARGUMENT = 3,
  /**
   * File could not be read or written.
   */
  BRL_STATUS_IO = 4,
  /**
   * The computation failed numerically.
   */
  BRL_STATUS_NUMERICAL = 5,
  /**
   * An output buffer was too small.
   */
  BRL_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * Internal failure (a bug; details via brl_last_error).
   */
  BRL_STATUS_INTERNAL = 7,
} BrlStatus;

/**
 * Opaque learning result: final Q table and the per-episode log.
 */
typedef struct BrlLearn BrlLearn;

/**
 * Opaque finite MDP model.
 */
typedef struct BrlMdp BrlMdp;

/**
 * Opaque planning result: a Q table and its greedy/regret-matched policy.
 */
typedef struct BrlPlan BrlPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * always NUL-terminated) and returns the full message length in bytes.
 * Call with a null `buf` to query the required capacity.
 *
 * # Safety
 * `buf` must be null or point to at least `cap` writable bytes.
 */
size_t brl_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *brl_version(void);

/**
 * Loads an MDP from its text-file form.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum BrlStatus brl_mdp_load(const char *path, struct BrlMdp **out);

/**
 * Writes an MDP to its text-file form.
 *
 * # Safety
 * `mdp` must be a live handle; `path` must be NUL-terminated.
 */
enum BrlStatus brl_mdp_save(const struct BrlMdp *mdp, const char *path);

/**
 * Builds a dense random MDP, reproducible from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BrlStatus brl_mdp_random(size_t num_states,
                              size_t num_actions,
                              double discount,
                              uint64_t seed,
                              struct BrlMdp **out);

/**
 * The canonical 4x12 cliff-walking gridworld as an MDP (absorbing
 * terminal state appended).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BrlStatus brl_mdp_cliff(double discount, struct BrlMdp **out);

/**
 * Number of states (0 on a null handle).
 *
 * # Safety
 * `mdp` must be null or a live handle from this library.
 */
size_t brl_mdp_num_states(const struct BrlMdp *mdp);

/**
 * Number of actions (0 on a null handle).
 *
 * # Safety
 * `mdp` must be null or a live handle from this library.
 */
size_t brl_mdp_num_actions(const struct BrlMdp *mdp);

/**
 * Discount factor (NaN on a null handle).
 *
 * # Safety
 * `mdp` must be null or a live handle from this library.
 */
double brl_mdp_discount(const struct BrlMdp *mdp);

/**
 * Releases an MDP handle; null is a no-op.
 *
 * # Safety
 * `mdp` must have been returned by this library and not yet freed.
 */
void brl_mdp_free(struct BrlMdp *mdp);

/**
 * Classic Bellman-optimality iteration to `tolerance` (or `max_iters`).
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be a valid pointer.
 */
enum BrlStatus brl_plan_value_iteration(const struct BrlMdp *mdp,
                                        double tolerance,
                                        size_t max_iters,
                                        struct BrlPlan **out);

/**
 * Blackwell value iteration for exactly `iters` steps from the zero /
 * uniform start; the returned Q table is the running average.
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be a valid pointer.
 */
enum BrlStatus brl_plan_blackwell(const struct BrlMdp *mdp, size_t iters, struct BrlPlan **out);

/**
 * Iterations actually performed.
 *
 * # Safety
 * `plan` must be null or a live handle from this library.
 */
size_t brl_plan_iterations(const struct BrlPlan *plan);

/**
 * Whether the tolerance was reached (always true for the Blackwell
 * planner, which runs a fixed budget).
 *
 * # Safety
 * `plan` must be null or a live handle from this library.
 */
bool brl_plan_converged(const struct BrlPlan *plan);

/**
 * Copies the Q table (row-major `num_states * num_actions`) into `buf`.
 *
 * # Safety
 * `plan` must be a live handle; `buf` must hold at least `len` doubles.
 */
enum BrlStatus brl_plan_q(const struct BrlPlan *plan, double *buf, size_t len);

/**
 * Greedy action of the plan's policy at `state`.
 *
 * # Safety
 * `plan` must be a live handle; `out_action` must be a valid pointer.
 */
enum BrlStatus brl_plan_greedy_action(const struct BrlPlan *plan, size_t state, size_t *out_action);

/**
 * Releases a plan handle; null is a no-op.
 *
 * # Safety
 * `plan` must have been returned by this library and not yet freed.
 */
void brl_plan_free(struct BrlPlan *plan);

/**
 * Runs one learner on the canonical cliff-walking task. `algo` is one of
 * `blackwell-q`, `q-learning`, `sarsa`, `expected-sarsa`; seeding matches
 * the CLI (`run i` of the harness with `base_seed = seed`, run id 0), so
 * results are reproducible across bindings.
 *
 * # Safety
 * `algo` must be NUL-terminated; `out` must be a valid pointer.
 */
enum BrlStatus brl_learn_cliff(const char *algo,
                               size_t episodes,
                               uint64_t seed,
                               struct BrlLearn **out);

/**
 * Number of completed episodes.
 *
 * # Safety
 * `learn` must be null or a live handle from this library.
 */
size_t brl_learn_num_episodes(const struct BrlLearn *learn);

/**
 * Return of one episode.
 *
 * # Safety
 * `learn` must be a live handle; `out_return` must be a valid pointer.
 */
enum BrlStatus brl_learn_episode_return(const struct BrlLearn *learn,
                                        size_t episode,
                                        double *out_return);

/**
 * Copies the learned Q table (row-major) into `buf`.
 *
 * # Safety
 * `learn` must be a live handle; `buf` must hold at least `len` doubles.
 */
enum BrlStatus brl_learn_q(const struct BrlLearn *learn, double *buf, size_t len);

/**
 * Steps the greedy policy of the learned Q table takes to reach the goal
 * from the start; writes false to `out_reached` if it fails within 10000
 * steps.
 *
 * # Safety
 * `learn` must be a live handle; both out-pointers must be valid.
 */
enum BrlStatus brl_learn_greedy_path(const struct BrlLearn *learn,
                                     bool *out_reached,
                                     size_t *out_steps);

/**
 * Releases a learn handle; null is a no-op.
 *
 * # Safety
 * `learn` must have been returned by this library and not yet freed.
 */
void brl_learn_free(struct BrlLearn *learn);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLACKWELL_RL_H */
