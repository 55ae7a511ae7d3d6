#include "ppo.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace contmgr {

PolicyParams make_policy_with_sizes(int obs_size, int n_actions,
                                    std::uint64_t seed, std::vector<int> hidden) {
  Rng rng(seed);
  std::vector<int> actor_sizes{obs_size};
  actor_sizes.insert(actor_sizes.end(), hidden.begin(), hidden.end());
  std::vector<int> critic_sizes = actor_sizes;
  actor_sizes.push_back(n_actions);
  critic_sizes.push_back(1);
  // Small actor output gain keeps the initial policy close to uniform.
  PolicyParams p{Mlp(actor_sizes, rng, 0.01), Mlp(critic_sizes, rng, 1.0)};
  return p;
}

PolicyParams make_policy(int n_containers, std::uint64_t seed,
                         std::vector<int> hidden) {
  return make_policy_with_sizes(observation_size(n_containers), n_containers + 1,
                                seed, std::move(hidden));
}

void set_noop_prior(PolicyParams& params, double prob) {
  require(prob > 0.0 && prob < 1.0, "no-op prior must be in (0, 1)");
  const int n = params.num_actions();
  require(n >= 2, "no-op prior needs at least two actions");
  Vector& theta = params.actor.params();
  const Eigen::Index first = theta.size() - n;  // output bias block
  theta.segment(first, n).setZero();
  theta[first] = std::log(prob * (n - 1) / (1.0 - prob));
}

void PPOConfig::validate() const {
  require(clip_eps > 0.0, "ppo: clip_eps must be positive");
  require(gamma > 0.0 && gamma <= 1.0, "ppo: gamma must be in (0, 1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "ppo: gae_lambda must be in [0, 1]");
  require(kl_limit > 0.0, "ppo: kl_limit must be positive");
  require(learning_rate > 0.0, "ppo: learning_rate must be positive");
  require(epochs_per_update >= 1, "ppo: epochs_per_update must be >= 1");
  require(minibatch_size >= 1, "ppo: minibatch_size must be >= 1");
  require(rollout_steps >= 1, "ppo: rollout_steps must be >= 1");
  require(initial_noop_probability < 1.0, "ppo: initial_noop_probability must be < 1");
}

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Vector softmax(const Vector& logits) { return log_softmax(logits).array().exp(); }

ActResult sample_categorical(const Vector& logits, Rng& rng) {
  const Vector logp = log_softmax(logits);
  const double u = rng.uniform();
  double acc = 0.0;
  int chosen = static_cast<int>(logits.size()) - 1;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    acc += std::exp(logp[k]);
    if (u < acc) {
      chosen = static_cast<int>(k);
      break;
    }
  }
  // Guard against rounding in the cumulative sum landing on a zero-mass tail.
  while (chosen > 0 && std::exp(logp[chosen]) == 0.0) --chosen;
  return {chosen, logp[chosen]};
}

ActResult act(const PolicyParams& params, std::span<const double> observation,
              Rng& rng) {
  return sample_categorical(params.actor.forward(observation), rng);
}

Vector action_probabilities(const PolicyParams& params,
                            std::span<const double> observation) {
  return softmax(params.actor.forward(observation));
}

double value_estimate(const PolicyParams& params,
                      std::span<const double> observation) {
  return params.critic.forward(observation)[0];
}

void Trajectory::validate() const {
  const std::size_t n = actions.size();
  require(observations.size() == n * static_cast<std::size_t>(obs_size) &&
              log_probs.size() == n && rewards.size() == n &&
              values.size() == n && dones.size() == n,
          "trajectory: sequences have unequal lengths");
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const bool> dones, double gamma, double lambda,
              double bootstrap_value) {
  const std::size_t n = rewards.size();
  require(values.size() == n && dones.size() == n,
          "gae: sequences must have equal length");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 == n ? bootstrap_value : values[k + 1];
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    running = delta + gamma * lambda * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
  }
  return out;
}

GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values, const std::vector<bool>& dones,
              double gamma, double lambda, double bootstrap_value) {
  std::unique_ptr<bool[]> flags(new bool[dones.size()]);
  for (std::size_t k = 0; k < dones.size(); ++k) flags[k] = dones[k];
  return gae(std::span<const double>(rewards), std::span<const double>(values),
             std::span<const bool>(flags.get(), dones.size()), gamma, lambda,
             bootstrap_value);
}

ActorLoss actor_loss(const Mlp& actor, const Batch& batch, double clip_eps,
                     double entropy_coef, Vector* grad) {
  Mlp::Cache cache;
  const Matrix logits = actor.forward(batch.observations, grad ? &cache : nullptr);
  const Eigen::Index n_act = logits.rows(), bsz = logits.cols();
  Matrix d_logits(n_act, bsz);
  ActorLoss out;
  const double inv_b = 1.0 / static_cast<double>(bsz);
  for (Eigen::Index j = 0; j < bsz; ++j) {
    const Vector logp = log_softmax(logits.col(j));
    const Vector p = logp.array().exp();
    const int a = batch.actions[j];
    const double adv = batch.advantages[j];
    const double ratio = std::exp(logp[a] - batch.old_log_probs[j]);
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double s1 = ratio * adv, s2 = clipped * adv;
    const bool unclipped_branch = s1 <= s2;
    out.surrogate -= std::min(s1, s2) * inv_b;
    const double ent = -(p.array() * logp.array()).sum();
    out.entropy += ent * inv_b;
    out.approx_kl += ((ratio - 1.0) - std::log(ratio)) * inv_b;
    if (std::abs(ratio - 1.0) > clip_eps) out.clip_fraction += inv_b;

    if (grad) {
      // d(-min)/d ratio, then chain through d ratio / d logit_k = r (1[k=a] - p_k)
      const double d_ratio = unclipped_branch ? -adv : 0.0;
      for (Eigen::Index k = 0; k < n_act; ++k) {
        const double onehot = k == a ? 1.0 : 0.0;
        const double d_surr = d_ratio * ratio * (onehot - p[k]);
        // -c * dH/dz_k, with dH/dz_k = -p_k (log p_k + H)
        const double d_ent = entropy_coef * p[k] * (logp[k] + ent);
        d_logits(k, j) = (d_surr + d_ent) * inv_b;
      }
    }
  }
  out.total = out.surrogate - entropy_coef * out.entropy;
  if (grad) actor.backward(cache, d_logits, *grad);
  return out;
}

double critic_loss(const Mlp& critic, const Batch& batch, double value_coef,
                   Vector* grad) {
  Mlp::Cache cache;
  const Matrix v = critic.forward(batch.observations, grad ? &cache : nullptr);
  const Eigen::Index bsz = v.cols();
  const Eigen::RowVectorXd err = v.row(0) - batch.returns.transpose();
  const double loss = value_coef * 0.5 * err.squaredNorm() / bsz;
  if (grad) {
    Matrix d = value_coef * err / static_cast<double>(bsz);
    critic.backward(cache, d, *grad);
  }
  return loss;
}

Adam::Adam(Eigen::Index n, double beta1, double beta2, double eps)
    : m_(Vector::Zero(n)), v_(Vector::Zero(n)), beta1_(beta1), beta2_(beta2),
      eps_(eps) {}

void Adam::step(Vector& params, const Vector& grad, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

namespace {

void check_finite(const Vector& g, const char* which) {
  if (!g.allFinite())
    fail(ErrorCode::kNumeric, std::string("ppo_update: non-finite ") + which +
                                  " gradient (norm " +
                                  std::to_string(g.norm()) + ")");
}

void clip_norm(Vector& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}

}  // namespace

PpoLearner::PpoLearner(PolicyParams params, const PPOConfig& config)
    : params_(std::move(params)),
      config_(config),
      actor_opt_(params_.actor.num_params()),
      critic_opt_(params_.critic.num_params()) {
  config_.validate();
}

UpdateStats PpoLearner::update(Trajectory& traj, Rng& rng) {
  traj.validate();
  require(traj.obs_size == params_.observation_size(),
          "ppo_update: observation size mismatch");
  const std::size_t n = traj.size();
  UpdateStats stats;
  if (n == 0) return stats;

  GaeResult g = gae(traj.rewards, traj.values, traj.dones, config_.gamma,
                    config_.gae_lambda, traj.bootstrap_value);
  traj.advantages = g.advantages;
  traj.returns = g.returns;

  // per-batch advantage normalization
  Eigen::Map<const Vector> adv_raw(traj.advantages.data(), n);
  const double mean = adv_raw.mean();
  const double var = n > 1 ? (adv_raw.array() - mean).square().sum() / (n - 1) : 0.0;
  const Vector adv = (adv_raw.array() - mean) / (std::sqrt(var) + 1e-8);
  for (Eigen::Index k = 0; k < adv.size(); ++k)
    if (!std::isfinite(adv[k]))
      fail(ErrorCode::kNumeric, "ppo_update: non-finite advantage");

  const std::size_t mb = std::min<std::size_t>(config_.minibatch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Vector actor_grad, critic_grad;

  for (int epoch = 0; epoch < config_.epochs_per_update && !stats.early_stopped;
       ++epoch) {
    for (std::size_t k = n - 1; k > 0; --k)
      std::swap(order[k], order[rng.below(k + 1)]);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t len = std::min(mb, n - start);
      Batch b;
      b.observations.resize(traj.obs_size, static_cast<Eigen::Index>(len));
      b.actions.resize(len);
      b.old_log_probs.resize(len);
      b.advantages.resize(len);
      b.returns.resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = order[start + j];
        b.observations.col(j) = Eigen::Map<const Vector>(
            traj.observations.data() + idx * traj.obs_size, traj.obs_size);
        b.actions[j] = traj.actions[idx];
        b.old_log_probs[j] = traj.log_probs[idx];
        b.advantages[j] = adv[idx];
        b.returns[j] = traj.returns[idx];
      }

      const ActorLoss al = actor_loss(params_.actor, b, config_.clip_eps,
                                      config_.entropy_coef,
                                      config_.freeze_actor ? nullptr : &actor_grad);
      if (al.approx_kl > config_.kl_limit) {
        stats.early_stopped = true;
        break;
      }
      const double vl = critic_loss(params_.critic, b, config_.value_coef,
                                    &critic_grad);
      check_finite(critic_grad, "critic");
      if (!config_.freeze_actor) {
        check_finite(actor_grad, "actor");
        clip_norm(actor_grad, config_.max_grad_norm);
        actor_opt_.step(params_.actor.params(), actor_grad, config_.learning_rate);
      }
      clip_norm(critic_grad, config_.max_grad_norm);
      critic_opt_.step(params_.critic.params(), critic_grad, config_.learning_rate);

      stats.mean_kl += al.approx_kl;
      stats.clip_fraction += al.clip_fraction;
      stats.policy_loss += al.surrogate;
      stats.entropy += al.entropy;
      stats.value_loss += vl;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double m = stats.minibatches;
    stats.mean_kl /= m;
    stats.clip_fraction /= m;
    stats.policy_loss /= m;
    stats.entropy /= m;
    stats.value_loss /= m;
  }
  return stats;
}

std::pair<PolicyParams, UpdateStats> ppo_update(const PolicyParams& params,
                                                Trajectory& traj,
                                                const PPOConfig& config) {
  PpoLearner learner(params, config);
  Rng rng(derive_seed(config.seed, 0x5050));
  UpdateStats s = learner.update(traj, rng);
  return {learner.params(), s};
}

void reset_episode(Environment& env, std::uint64_t seed, bool exploring_starts) {
  if (!exploring_starts) {
    env.reset(seed);
    return;
  }
  Rng rng(derive_seed(seed, 0x5747));
  std::vector<double> init;
  for (const auto& c : env.config().containers) init.push_back(rng.uniform(0.0, c.peak_high));
  env.reset(seed, std::span<const double>(init));
}

Trajectory collect_rollout(Environment& env, const PolicyParams& params,
                           int steps, Rng& rng, Rng& episode_seeds,
                           std::vector<double>* episode_returns,
                           double* running_return, bool exploring_starts) {
  Trajectory tr;
  tr.obs_size = params.observation_size();
  tr.observations.reserve(static_cast<std::size_t>(steps) * tr.obs_size);
  bool last_done = false;
  for (int s = 0; s < steps; ++s) {
    if (env.done()) reset_episode(env, episode_seeds.next_u64(), exploring_starts);
    const std::vector<double> obs = env.observation();
    const ActResult a = act(params, obs, rng);
    const double v = value_estimate(params, obs);
    const StepOutcome out = env.step(a.action);
    tr.observations.insert(tr.observations.end(), obs.begin(), obs.end());
    tr.actions.push_back(a.action);
    tr.log_probs.push_back(a.log_prob);
    tr.rewards.push_back(out.reward);
    tr.values.push_back(v);
    tr.dones.push_back(out.terminated);
    if (running_return) *running_return += out.reward;
    if (out.terminated) {
      if (episode_returns && running_return) episode_returns->push_back(*running_return);
      if (running_return) *running_return = 0.0;
    }
    last_done = out.terminated;
  }
  tr.bootstrap_value = last_done ? 0.0 : value_estimate(params, env.observation());
  return tr;
}

namespace {

nlohmann::json mlp_to_json(const Mlp& m) {
  const Vector& p = m.params();
  return {{"sizes", m.sizes()},
          {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp m(j.at("sizes").get<std::vector<int>>());
  const auto values = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != m.num_params())
    fail(ErrorCode::kFormat, "policy: parameter count does not match layer sizes");
  m.params() = Eigen::Map<const Vector>(values.data(), values.size());
  return m;
}

}  // namespace

std::string policy_to_json(const PolicyParams& params,
                           const std::string& manifest_hash) {
  nlohmann::json j;
  j["format"] = "contmgr-policy";
  j["version"] = 1;
  j["manifest"] = manifest_hash;
  j["layout"] = "per layer: weights out x in row-major, then bias";
  j["actor"] = mlp_to_json(params.actor);
  j["critic"] = mlp_to_json(params.critic);
  return j.dump() + "\n";
}

PolicyParams policy_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != "contmgr-policy")
      fail(ErrorCode::kFormat, "policy: not a contmgr-policy document");
    if (j.value("version", 0) != 1)
      fail(ErrorCode::kFormat, "policy: unsupported version");
    PolicyParams p{mlp_from_json(j.at("actor")), mlp_from_json(j.at("critic"))};
    if (p.actor.input_size() != p.critic.input_size() ||
        p.critic.output_size() != 1)
      fail(ErrorCode::kFormat, "policy: actor/critic shapes are inconsistent");
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("policy: malformed weight file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument)
      fail(ErrorCode::kFormat, std::string("policy: ") + e.what());
    throw;
  }
}

void save_policy(const PolicyParams& params, const std::string& path,
                 const std::string& manifest_hash) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write policy '" + path + "'");
  out << policy_to_json(params, manifest_hash);
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingArtifact, "cannot read policy '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

}  // namespace contmgr
