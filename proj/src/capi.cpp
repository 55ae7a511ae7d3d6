#include "contmgr/contmgr.h"

#include <cstring>
#include <new>
#include <string>

#include "boosted_trees.hpp"
#include "env.hpp"
#include "error.hpp"
#include "facility.hpp"
#include "override.hpp"
#include "pipeline.hpp"
#include "ppo.hpp"
#include "reward.hpp"

struct cm_facility {
  contmgr::FacilityConfig config;
};
struct cm_env {
  contmgr::Environment env;
};
struct cm_policy {
  contmgr::PolicyParams params;
};
struct cm_model {
  contmgr::BoostedEnsemble model;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_message;

cm_status to_status(contmgr::ErrorCode code) {
  switch (code) {
    case contmgr::ErrorCode::kInvalidArgument: return CM_ERR_INVALID_ARGUMENT;
    case contmgr::ErrorCode::kIo: return CM_ERR_IO;
    case contmgr::ErrorCode::kFormat: return CM_ERR_FORMAT;
    case contmgr::ErrorCode::kNumeric: return CM_ERR_NUMERIC;
    case contmgr::ErrorCode::kMissingArtifact: return CM_ERR_MISSING_ARTIFACT;
    case contmgr::ErrorCode::kInternal: return CM_ERR_INTERNAL;
  }
  return CM_ERR_INTERNAL;
}

template <typename F>
cm_status guard(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CM_OK;
  } catch (const contmgr::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CM_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  contmgr::require(p != nullptr, std::string(what) + " must not be NULL");
}

std::string str(const char* s) { return s ? s : ""; }

contmgr::CommonOptions common(const cm_common_options& c) {
  contmgr::CommonOptions o;
  o.config_path = str(c.config_path);
  o.containers = c.containers;
  if (c.has_seed) o.seed = c.seed;
  o.jobs = c.jobs;
  return o;
}

void init_common(cm_common_options* c) {
  std::memset(c, 0, sizeof *c);
  c->jobs = 1;
}

void set_message(const contmgr::CommandResult& r, const char** message) {
  g_message = r.message;
  if (message) *message = g_message.c_str();
}

contmgr::EvaluateOptions eval_options(const cm_evaluate_options& c) {
  contmgr::EvaluateOptions o;
  o.common = common(c.common);
  o.method = c.method ? c.method : "cl";
  o.weights_dir = str(c.weights_dir);
  o.model_path = str(c.model_path);
  o.n_seeds = c.n_seeds;
  o.n_rollouts = c.n_rollouts;
  if (c.has_theta) o.theta = c.theta;
  if (c.has_delta) o.delta = c.delta;
  if (c.require_pu_free >= 0) o.require_pu_free = c.require_pu_free != 0;
  if (c.theta_grid)
    o.theta_grid.assign(c.theta_grid, c.theta_grid + c.theta_grid_length);
  o.out_dir = str(c.out_dir);
  return o;
}

}  // namespace

extern "C" {

const char* cm_version(void) { return contmgr::kToolVersion; }

const char* cm_last_error(void) { return g_last_error.c_str(); }

const char* cm_status_name(cm_status status) {
  switch (status) {
    case CM_OK: return "ok";
    case CM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CM_ERR_IO: return "i/o error";
    case CM_ERR_FORMAT: return "format error";
    case CM_ERR_NUMERIC: return "numeric error";
    case CM_ERR_MISSING_ARTIFACT: return "missing artifact";
    case CM_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

cm_status cm_facility_default(int n_containers, cm_facility** out) {
  return guard([&] {
    need(out, "out");
    contmgr::require(n_containers >= 2, "facility needs at least 2 containers");
    *out = new cm_facility{contmgr::default_facility(n_containers)};
  });
}

cm_status cm_facility_load(const char* path, cm_facility** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new cm_facility{contmgr::load_facility(path)};
  });
}

cm_status cm_facility_save(const cm_facility* facility, const char* path) {
  return guard([&] {
    need(facility, "facility");
    need(path, "path");
    contmgr::save_facility(facility->config, path);
  });
}

int cm_facility_size(const cm_facility* facility) {
  return facility ? facility->config.size() : 0;
}

cm_status cm_facility_peaks(const cm_facility* facility, int id, double* peak_low,
                            double* peak_high) {
  return guard([&] {
    need(facility, "facility");
    contmgr::require(id >= 1 && id <= facility->config.size(), "container id out of range");
    const auto& c = facility->config.container(id);
    if (peak_low) *peak_low = c.peak_low;
    if (peak_high) *peak_high = c.peak_high;
  });
}

void cm_facility_free(cm_facility* facility) { delete facility; }

cm_status cm_reward(int phase, double volume, int action, int valid, double peak_low,
                    double peak_high, double* out) {
  return guard([&] {
    need(out, "out");
    contmgr::require(phase >= 1 && phase <= 3, "phase must be 1, 2 or 3");
    const auto params = contmgr::make_reward_params(static_cast<contmgr::Phase>(phase),
                                                    contmgr::RewardShape{}, -1.0);
    *out = contmgr::compute_reward(params, volume, action, valid != 0, peak_low, peak_high);
  });
}

cm_status cm_env_create(const cm_facility* facility, int phase, uint64_t seed,
                        cm_env** out) {
  return guard([&] {
    need(facility, "facility");
    need(out, "out");
    contmgr::require(phase >= 1 && phase <= 3, "phase must be 1, 2 or 3");
    auto* e = new cm_env{contmgr::Environment(
        facility->config,
        facility->config.reward_params(static_cast<contmgr::Phase>(phase)), seed)};
    e->env.reset(seed);
    *out = e;
  });
}

cm_status cm_env_reset(cm_env* env, uint64_t seed) {
  return guard([&] {
    need(env, "env");
    env->env.reset(seed);
  });
}

cm_status cm_env_step(cm_env* env, int action, cm_step_result* out) {
  return guard([&] {
    need(env, "env");
    contmgr::require(!env->env.done(), "episode is over; reset the environment");
    const auto r = env->env.step(action);
    if (out) {
      out->reward = r.reward;
      out->terminated = r.terminated;
      out->truncated = r.info.truncated;
      out->invalid_action = r.info.invalid_action;
      out->collision = r.info.collision_now;
      out->emptied_container = r.info.emptied_container.value_or(0);
      out->emptied_volume = r.info.emptied_volume.value_or(0.0);
    }
  });
}

size_t cm_env_observation_size(const cm_env* env) {
  return env ? static_cast<size_t>(contmgr::observation_size(env->env.config().size())) : 0;
}

cm_status cm_env_observation(const cm_env* env, double* buffer, size_t length) {
  return guard([&] {
    need(env, "env");
    need(buffer, "buffer");
    const auto obs = env->env.observation();
    contmgr::require(length == obs.size(), "observation buffer has the wrong length");
    std::copy(obs.begin(), obs.end(), buffer);
  });
}

cm_status cm_env_volumes(const cm_env* env, double* buffer, size_t length) {
  return guard([&] {
    need(env, "env");
    need(buffer, "buffer");
    const auto& v = env->env.state().volumes;
    contmgr::require(length == v.size(), "volume buffer has the wrong length");
    std::copy(v.begin(), v.end(), buffer);
  });
}

int cm_env_pu_counter(const cm_env* env) { return env ? env->env.state().pu_counter : 0; }

int cm_env_time(const cm_env* env) { return env ? env->env.state().t : 0; }

void cm_env_free(cm_env* env) { delete env; }

cm_status cm_policy_create(int n_containers, uint64_t seed, cm_policy** out) {
  return guard([&] {
    need(out, "out");
    contmgr::require(n_containers >= 1, "policy needs at least one container");
    *out = new cm_policy{contmgr::make_policy(n_containers, seed)};
  });
}

cm_status cm_policy_load(const char* path, cm_policy** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new cm_policy{contmgr::load_policy(path)};
  });
}

cm_status cm_policy_save(const cm_policy* policy, const char* path) {
  return guard([&] {
    need(policy, "policy");
    need(path, "path");
    contmgr::save_policy(policy->params, path);
  });
}

int cm_policy_num_actions(const cm_policy* policy) {
  return policy ? policy->params.num_actions() : 0;
}

cm_status cm_policy_probabilities(const cm_policy* policy, const double* observation,
                                  size_t obs_length, double* probs, size_t n_actions) {
  return guard([&] {
    need(policy, "policy");
    need(observation, "observation");
    need(probs, "probs");
    contmgr::require(obs_length == static_cast<size_t>(policy->params.observation_size()),
                     "observation has the wrong length");
    contmgr::require(n_actions == static_cast<size_t>(policy->params.num_actions()),
                     "probability buffer has the wrong length");
    const auto p = contmgr::action_probabilities(policy->params, {observation, obs_length});
    for (size_t k = 0; k < n_actions; ++k) probs[k] = p[static_cast<Eigen::Index>(k)];
  });
}

cm_status cm_policy_value(const cm_policy* policy, const double* observation,
                          size_t obs_length, double* out) {
  return guard([&] {
    need(policy, "policy");
    need(observation, "observation");
    need(out, "out");
    contmgr::require(obs_length == static_cast<size_t>(policy->params.observation_size()),
                     "observation has the wrong length");
    *out = contmgr::value_estimate(policy->params, {observation, obs_length});
  });
}

void cm_policy_free(cm_policy* policy) { delete policy; }

cm_status cm_model_load(const char* path, cm_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new cm_model{contmgr::load_cm(path)};
  });
}

cm_status cm_model_predict(const cm_model* model, const double* features, size_t length,
                           double* probability) {
  return guard([&] {
    need(model, "model");
    need(features, "features");
    need(probability, "probability");
    *probability = contmgr::predict_proba(model->model, {features, length});
  });
}

void cm_model_free(cm_model* model) { delete model; }

void cm_override_options_init(cm_override_options* options) {
  if (!options) return;
  const contmgr::OverrideConfig d;
  options->theta = d.theta;
  options->delta = d.delta;
  options->require_pu_free = d.require_pu_free;
}

cm_status cm_override_decide(const cm_env* env, const cm_model* model,
                             const cm_override_options* options, int proposed,
                             int* action, int* overridden) {
  return guard([&] {
    need(env, "env");
    need(model, "model");
    need(options, "options");
    need(action, "action");
    const contmgr::OverrideConfig oc{options->theta, options->delta,
                                     options->require_pu_free != 0};
    oc.validate();
    const auto d = contmgr::decide_with_proposal(env->env.state(),
                                                 env->env.previous_volumes(), proposed,
                                                 env->env.config(), model->model, oc);
    *action = d.action;
    if (overridden) *overridden = d.overridden;
  });
}

void cm_simulate_options_init(cm_simulate_options* options) {
  if (!options) return;
  init_common(&options->common);
  options->policy = "random";
  options->out_path = nullptr;
}

void cm_train_options_init(cm_train_options* options) {
  if (!options) return;
  init_common(&options->common);
  options->mode = "curriculum";
  options->seeds = nullptr;
  options->n_seeds = 0;
  options->total_steps = 0;
  options->out_dir = nullptr;
}

void cm_gen_data_options_init(cm_gen_data_options* options) {
  if (!options) return;
  init_common(&options->common);
  options->repetitions = 0;
  options->horizon = 0;
  options->out_path = nullptr;
}

void cm_train_cm_options_init(cm_train_cm_options* options) {
  if (!options) return;
  init_common(&options->common);
  options->dataset_path = nullptr;
  options->out_path = nullptr;
}

void cm_evaluate_options_init(cm_evaluate_options* options) {
  if (!options) return;
  std::memset(options, 0, sizeof *options);
  init_common(&options->common);
  options->method = "cl";
  options->require_pu_free = -1;
}

cm_status cm_simulate(const cm_simulate_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    contmgr::SimulateOptions o;
    o.common = common(options->common);
    o.policy = options->policy ? options->policy : "random";
    o.out_path = str(options->out_path);
    set_message(contmgr::cmd_simulate(o), message);
  });
}

cm_status cm_train(const cm_train_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    contmgr::TrainOptions o;
    o.common = common(options->common);
    o.mode = options->mode ? options->mode : "curriculum";
    if (options->seeds) o.seeds.assign(options->seeds, options->seeds + options->n_seeds);
    o.total_steps = options->total_steps;
    o.out_dir = str(options->out_dir);
    set_message(contmgr::cmd_train(o), message);
  });
}

cm_status cm_gen_data(const cm_gen_data_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    contmgr::GenDataOptions o;
    o.common = common(options->common);
    o.repetitions = options->repetitions;
    o.horizon = options->horizon;
    o.out_path = str(options->out_path);
    set_message(contmgr::cmd_gen_data(o), message);
  });
}

cm_status cm_train_cm(const cm_train_cm_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    contmgr::TrainCmOptions o;
    o.common = common(options->common);
    o.dataset_path = str(options->dataset_path);
    o.out_path = str(options->out_path);
    set_message(contmgr::cmd_train_cm(o), message);
  });
}

cm_status cm_evaluate(const cm_evaluate_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    set_message(contmgr::cmd_evaluate(eval_options(*options)), message);
  });
}

cm_status cm_sweep(const cm_evaluate_options* options, const char** message) {
  return guard([&] {
    need(options, "options");
    set_message(contmgr::cmd_sweep(eval_options(*options)), message);
  });
}

}  // extern "C"
