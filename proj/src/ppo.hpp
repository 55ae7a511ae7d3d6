#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "env.hpp"
#include "mlp.hpp"
#include "rng.hpp"

namespace contmgr {

// Actor maps an observation to n + 1 action logits, critic to a value.
struct PolicyParams {
  Mlp actor;
  Mlp critic;

  int num_actions() const { return actor.output_size(); }
  int observation_size() const { return actor.input_size(); }
};

// Two tanh hidden layers per network by default.
// Sets the actor's output biases so the initial policy picks action 0 with
// probability `prob` and the rest uniformly.
void set_noop_prior(PolicyParams& params, double prob);

PolicyParams make_policy(int n_containers, std::uint64_t seed,
                         std::vector<int> hidden = {64, 64});
PolicyParams make_policy_with_sizes(int obs_size, int n_actions,
                                    std::uint64_t seed, std::vector<int> hidden);

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double learning_rate = 1e-3;
  int epochs_per_update = 4;
  int minibatch_size = 256;
  int rollout_steps = 2048;
  double kl_limit = 0.05;
  bool freeze_actor = false;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  std::vector<int> hidden = {64, 64};
  // Training episodes start with volumes uniform in [0, peak_high) instead
  // of the environment's default [0, peak_low), so slow containers reach
  // their peaks early enough to be learned.
  bool exploring_starts = false;
  // Initial probability of the no-op. A uniform start empties on most
  // steps, collects penalties and collapses to never emptying. <= 0 keeps
  // the uniform start.
  double initial_noop_probability = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

// Numerically stable softmax / log-softmax of one logit vector.
Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
};

// Samples from softmax(actor(observation)).
ActResult act(const PolicyParams& params, std::span<const double> observation,
              Rng& rng);
// Samples a categorical given raw logits (inverse CDF over one uniform).
ActResult sample_categorical(const Vector& logits, Rng& rng);
Vector action_probabilities(const PolicyParams& params,
                            std::span<const double> observation);
double value_estimate(const PolicyParams& params,
                      std::span<const double> observation);

struct Trajectory {
  int obs_size = 0;
  std::vector<double> observations;  // row per step, obs_size wide
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  double bootstrap_value = 0.0;  // V(s_T) when the last step is not terminal

  std::size_t size() const { return actions.size(); }
  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Generalized advantage estimation. `dones[t]` cuts bootstrapping after
// step t; `bootstrap_value` is V of the state following the last step.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const bool> dones, double gamma, double lambda,
              double bootstrap_value = 0.0);
GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values, const std::vector<bool>& dones,
              double gamma, double lambda, double bootstrap_value = 0.0);

// Minibatch view for the loss functions. Advantages are used as given.
struct Batch {
  Matrix observations;  // obs_size x B
  std::vector<int> actions;
  Vector old_log_probs;
  Vector advantages;
  Vector returns;
};

struct ActorLoss {
  double surrogate = 0.0;  // clipped surrogate loss (to minimize)
  double entropy = 0.0;    // mean policy entropy
  double total = 0.0;      // surrogate - entropy_coef * entropy
  double approx_kl = 0.0;  // mean of (r - 1) - log r, estimates KL(old||new)
  double clip_fraction = 0.0;
};

ActorLoss actor_loss(const Mlp& actor, const Batch& batch, double clip_eps,
                     double entropy_coef, Vector* grad);
// value_coef * 0.5 * mean((V - R)^2)
double critic_loss(const Mlp& critic, const Batch& batch, double value_coef,
                   Vector* grad);

class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Vector& params, const Vector& grad, double lr);

 private:
  Vector m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

struct UpdateStats {
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  int minibatches = 0;
  bool early_stopped = false;
};

// Owns the parameters and optimizer state across updates.
class PpoLearner {
 public:
  PpoLearner(PolicyParams params, const PPOConfig& config);

  // Runs GAE on `traj` (filling advantages/returns) and then
  // epochs_per_update passes of minibatch updates.
  UpdateStats update(Trajectory& traj, Rng& rng);

  PolicyParams& params() { return params_; }
  const PolicyParams& params() const { return params_; }
  PPOConfig& config() { return config_; }
  const PPOConfig& config() const { return config_; }

 private:
  PolicyParams params_;
  PPOConfig config_;
  Adam actor_opt_;
  Adam critic_opt_;
};

// Functional form: returns updated parameters, leaves `params` untouched.
// Optimizer state starts fresh.
std::pair<PolicyParams, UpdateStats> ppo_update(const PolicyParams& params,
                                                Trajectory& traj,
                                                const PPOConfig& config);

// Starts a new episode from `seed`, optionally with exploring starts.
void reset_episode(Environment& env, std::uint64_t seed, bool exploring_starts);

// Rolls the policy in `env` for `steps` steps, resetting on termination
// with seeds drawn from `episode_seeds`. Completed episode returns are
// appended to `episode_returns`.
Trajectory collect_rollout(Environment& env, const PolicyParams& params,
                           int steps, Rng& rng, Rng& episode_seeds,
                           std::vector<double>* episode_returns,
                           double* running_return, bool exploring_starts = false);

std::string policy_to_json(const PolicyParams& params,
                           const std::string& manifest_hash = {});
PolicyParams policy_from_json(const std::string& text);
void save_policy(const PolicyParams& params, const std::string& path,
                 const std::string& manifest_hash = {});
PolicyParams load_policy(const std::string& path);

}  // namespace contmgr
