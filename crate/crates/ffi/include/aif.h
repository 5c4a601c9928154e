#ifndef AIF_H
#define AIF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AifStatus {
  AIF_STATUS_OK = 0,
  AIF_STATUS_NULL_POINTER = 1,
  AIF_STATUS_CONTRACT = 2,
  AIF_STATUS_DIMENSION_MISMATCH = 3,
  AIF_STATUS_MISSING_ARTIFACT = 4,
  AIF_STATUS_IO = 5,
  AIF_STATUS_FORMAT = 6,
  AIF_STATUS_CONFIG = 7,
  AIF_STATUS_INSUFFICIENT_REWARD_DATA = 8,
  AIF_STATUS_EXPERT_FAILED = 9,
  AIF_STATUS_INVALID_UTF8 = 10,
  AIF_STATUS_PANIC = 11,
} AifStatus;

/**
 * Trained posterior, transition and likelihood networks.
 */
typedef struct AifModels AifModels;

/**
 * Habit policy network.
 */
typedef struct AifPolicy AifPolicy;

/**
 * Per-timestep preferred-state prior.
 */
typedef struct AifPrior AifPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library.
 */
const char *aif_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AifStatus aif_models_load(const char *path, struct AifModels **out);

/**
 * # Safety
 * `models` must come from [`aif_models_load`] and not be used afterwards.
 */
void aif_models_free(struct AifModels *models);

/**
 * Latent dimension, or 0 for NULL.
 *
 * # Safety
 * `models` must be NULL or a live handle.
 */
size_t aif_models_state_dim(const struct AifModels *models);

/**
 * Posterior belief over the next state given the previous state, action and observation.
 *
 * # Safety
 * All pointers must be valid for `state_dim` doubles.
 */
enum AifStatus aif_models_posterior(const struct AifModels *models,
                                    const double *s_prev,
                                    double action,
                                    double observation,
                                    double *mean_out,
                                    double *var_out);

/**
 * Predicted next-state belief without an observation.
 *
 * # Safety
 * All pointers must be valid for `state_dim` doubles.
 */
enum AifStatus aif_models_transition(const struct AifModels *models,
                                     const double *s_prev,
                                     double action,
                                     double *mean_out,
                                     double *var_out);

/**
 * Observation density of a latent state; writes one mean and one variance.
 *
 * # Safety
 * `s` must hold `state_dim` doubles; the outputs one double each.
 */
enum AifStatus aif_models_decode(const struct AifModels *models,
                                 const double *s,
                                 double *mean_out,
                                 double *var_out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AifStatus aif_prior_load(const char *path, struct AifPrior **out);

/**
 * # Safety
 * `prior` must come from [`aif_prior_load`] and not be used afterwards.
 */
void aif_prior_free(struct AifPrior *prior);

/**
 * Number of timesteps, or 0 for NULL.
 *
 * # Safety
 * `prior` must be NULL or a live handle.
 */
size_t aif_prior_horizon(const struct AifPrior *prior);

/**
 * Scores `num_candidates` random action sequences of length `horizon` from
 * the belief and writes the first action of the lowest-G sequence and its G.
 *
 * # Safety
 * Handles must be live; belief arrays hold `state_dim` doubles.
 */
enum AifStatus aif_plan(const struct AifModels *models,
                        const struct AifPrior *prior,
                        const double *belief_mean,
                        const double *belief_var,
                        size_t tau0,
                        size_t num_candidates,
                        size_t horizon,
                        uint64_t seed,
                        double *action_out,
                        double *g_out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AifStatus aif_policy_load(const char *path, struct AifPolicy **out);

/**
 * # Safety
 * `policy` must come from [`aif_policy_load`] and not be used afterwards.
 */
void aif_policy_free(struct AifPolicy *policy);

/**
 * Action in `[-1, 1]` for latent state `s`; `seed` drives stochastic policies only.
 *
 * # Safety
 * `s` must hold the policy's `state_dim` doubles.
 */
enum AifStatus aif_policy_action(const struct AifPolicy *policy,
                                 const double *s,
                                 uint64_t seed,
                                 double *action_out);

/**
 * KL(q || p) between diagonal Gaussians of dimension `dim`.
 *
 * # Safety
 * The four arrays hold `dim` doubles.
 */
enum AifStatus aif_gaussian_kl(size_t dim,
                               const double *q_mean,
                               const double *q_var,
                               const double *p_mean,
                               const double *p_var,
                               double *out);

/**
 * Differential entropy in nats.
 *
 * # Safety
 * Both arrays hold `dim` doubles.
 */
enum AifStatus aif_gaussian_entropy(size_t dim, const double *mean, const double *var, double *out);

/**
 * Log density of `x`.
 *
 * # Safety
 * The three arrays hold `dim` doubles.
 */
enum AifStatus aif_gaussian_log_prob(size_t dim,
                                     const double *x,
                                     const double *mean,
                                     const double *var,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIF_H */
