/* C interface to the container-management library.
 *
 * Every fallible call returns a cm_status. On failure, cm_last_error()
 * returns a message for the calling thread, valid until its next call.
 * Handles are opaque and must be released with the matching *_free.
 * Container ids are 1-based; action 0 is the no-op.
 */
#ifndef CONTMGR_CONTMGR_H
#define CONTMGR_CONTMGR_H

#include <stddef.h>
#include <stdint.h>

#if defined(CONTMGR_BUILDING_LIBRARY)
#define CM_API __attribute__((visibility("default")))
#else
#define CM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cm_status {
  CM_OK = 0,
  CM_ERR_INVALID_ARGUMENT = 1,
  CM_ERR_IO = 2,
  CM_ERR_FORMAT = 3,
  CM_ERR_NUMERIC = 4,
  CM_ERR_MISSING_ARTIFACT = 5,
  CM_ERR_INTERNAL = 6
} cm_status;

CM_API const char* cm_version(void);
CM_API const char* cm_last_error(void);
CM_API const char* cm_status_name(cm_status status);

typedef struct cm_facility cm_facility;
typedef struct cm_env cm_env;
typedef struct cm_policy cm_policy;
typedef struct cm_model cm_model;

/* Facilities */
CM_API cm_status cm_facility_default(int n_containers, cm_facility** out);
CM_API cm_status cm_facility_load(const char* path, cm_facility** out);
CM_API cm_status cm_facility_save(const cm_facility* facility, const char* path);
CM_API int cm_facility_size(const cm_facility* facility);
CM_API cm_status cm_facility_peaks(const cm_facility* facility, int id,
                                   double* peak_low, double* peak_high);
CM_API void cm_facility_free(cm_facility* facility);

/* Reward of emptying `action` at `volume` (phase 1..3). */
CM_API cm_status cm_reward(int phase, double volume, int action, int valid,
                           double peak_low, double peak_high, double* out);

/* Environments */
typedef struct cm_step_result {
  double reward;
  int terminated;
  int truncated;
  int invalid_action;
  int collision;
  int emptied_container; /* 0 when nothing was emptied */
  double emptied_volume;
} cm_step_result;

CM_API cm_status cm_env_create(const cm_facility* facility, int phase,
                               uint64_t seed, cm_env** out);
CM_API cm_status cm_env_reset(cm_env* env, uint64_t seed);
CM_API cm_status cm_env_step(cm_env* env, int action, cm_step_result* out);
CM_API size_t cm_env_observation_size(const cm_env* env);
CM_API cm_status cm_env_observation(const cm_env* env, double* buffer, size_t length);
CM_API cm_status cm_env_volumes(const cm_env* env, double* buffer, size_t length);
CM_API int cm_env_pu_counter(const cm_env* env);
CM_API int cm_env_time(const cm_env* env);
CM_API void cm_env_free(cm_env* env);

/* Policies */
CM_API cm_status cm_policy_create(int n_containers, uint64_t seed, cm_policy** out);
CM_API cm_status cm_policy_load(const char* path, cm_policy** out);
CM_API cm_status cm_policy_save(const cm_policy* policy, const char* path);
CM_API int cm_policy_num_actions(const cm_policy* policy);
CM_API cm_status cm_policy_probabilities(const cm_policy* policy, const double* observation,
                                         size_t obs_length, double* probs, size_t n_actions);
CM_API cm_status cm_policy_value(const cm_policy* policy, const double* observation,
                                 size_t obs_length, double* out);
CM_API void cm_policy_free(cm_policy* policy);

/* Collision models */
CM_API cm_status cm_model_load(const char* path, cm_model** out);
/* features: 10 values, see the README for the layout */
CM_API cm_status cm_model_predict(const cm_model* model, const double* features,
                                  size_t length, double* probability);
CM_API void cm_model_free(cm_model* model);

/* Override of a proposed action given the current environment state. */
typedef struct cm_override_options {
  double theta;
  double delta;
  int require_pu_free;
} cm_override_options;

CM_API void cm_override_options_init(cm_override_options* options);
CM_API cm_status cm_override_decide(const cm_env* env, const cm_model* model,
                                    const cm_override_options* options, int proposed,
                                    int* action, int* overridden);

/* Pipeline commands. Strings may be NULL or empty for defaults; the output
 * directory defaults to $CONTMGR_OUT_DIR, then "out". */
typedef struct cm_common_options {
  const char* config_path;
  int containers;   /* > 0 selects the default facility of that size */
  int has_seed;
  uint64_t seed;    /* master seed when has_seed */
  int jobs;
} cm_common_options;

typedef struct cm_simulate_options {
  cm_common_options common;
  const char* policy; /* "random", "scripted" or a weights path */
  const char* out_path;
} cm_simulate_options;

typedef struct cm_train_options {
  cm_common_options common;
  const char* mode; /* "curriculum" or "naive" */
  const int* seeds; /* NULL: seeds 0..n-1 from the config */
  size_t n_seeds;
  long total_steps; /* 0: from the config */
  const char* out_dir;
} cm_train_options;

typedef struct cm_gen_data_options {
  cm_common_options common;
  long repetitions;
  int horizon;
  const char* out_path;
} cm_gen_data_options;

typedef struct cm_train_cm_options {
  cm_common_options common;
  const char* dataset_path;
  const char* out_path;
} cm_train_cm_options;

typedef struct cm_evaluate_options {
  cm_common_options common;
  const char* method; /* "naive", "cl" or "cl_cm" */
  const char* weights_dir;
  const char* model_path;
  int n_seeds;
  int n_rollouts;
  int has_theta;
  double theta;
  int has_delta;
  double delta;
  int require_pu_free; /* -1: from the config */
  const double* theta_grid;
  size_t theta_grid_length;
  const char* out_dir;
} cm_evaluate_options;

CM_API void cm_simulate_options_init(cm_simulate_options* options);
CM_API void cm_train_options_init(cm_train_options* options);
CM_API void cm_gen_data_options_init(cm_gen_data_options* options);
CM_API void cm_train_cm_options_init(cm_train_cm_options* options);
CM_API void cm_evaluate_options_init(cm_evaluate_options* options);

/* On success `message` (if non-NULL) receives a summary that stays valid
 * until the next command on this thread. */
CM_API cm_status cm_simulate(const cm_simulate_options* options, const char** message);
CM_API cm_status cm_train(const cm_train_options* options, const char** message);
CM_API cm_status cm_gen_data(const cm_gen_data_options* options, const char** message);
CM_API cm_status cm_train_cm(const cm_train_cm_options* options, const char** message);
CM_API cm_status cm_evaluate(const cm_evaluate_options* options, const char** message);
CM_API cm_status cm_sweep(const cm_evaluate_options* options, const char** message);

#ifdef __cplusplus
}
#endif

#endif
