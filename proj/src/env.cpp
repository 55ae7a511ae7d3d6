#include "env.hpp"

#include <cmath>

#include <json.hpp>

#include "error.hpp"

namespace contmgr {

double fill_step(double v, double alpha, double sigma, Rng& rng) {
  const double eps = sigma * rng.normal();
  return std::max(0.0, v + alpha + eps);
}

int busy_time(const ContainerSpec& spec, double v) {
  require(v > 0.0, "busy_time: volume must be positive");
  const int t = static_cast<int>(std::ceil(spec.busy_slope * v + spec.busy_offset));
  return std::max(1, t);
}

FacilityState reset(const FacilityConfig& config, std::uint64_t seed,
                    std::optional<std::span<const double>> init_volumes) {
  FacilityState s;
  const int n = config.size();
  if (init_volumes) {
    require(static_cast<int>(init_volumes->size()) == n,
            "reset: init_volumes has length " +
                std::to_string(init_volumes->size()) + ", expected " +
                std::to_string(n));
    for (double v : *init_volumes)
      require(v >= 0.0 && v < config.overflow_limit,
              "reset: init volume outside [0, overflow_limit)");
    s.volumes.assign(init_volumes->begin(), init_volumes->end());
  } else {
    Rng rng(seed);
    s.volumes.reserve(n);
    for (const auto& c : config.containers)
      s.volumes.push_back(rng.uniform(0.0, c.peak_low));
  }
  return s;
}

StepOutcome step(const FacilityState& state, int action,
                 const FacilityConfig& config, const RewardParams& reward,
                 Rng& rng) {
  const int n = config.size();
  require(action >= 0 && action <= n,
          "step: action " + std::to_string(action) + " outside 0.." +
              std::to_string(n));
  require(state.t < config.episode_length, "step: episode already finished");

  StepOutcome out;
  FacilityState& next = out.next_state;
  next = state;

  if (action != 0) {
    const ContainerSpec& spec = config.container(action);
    const double v = state.volumes[action - 1];
    const bool valid = state.pu_counter == 0 && v >= config.min_empty_volume;
    out.reward = compute_reward(reward, v, action, valid, spec.peak_low,
                                spec.peak_high);
    if (valid) {
      out.info.emptied_container = action;
      out.info.emptied_volume = v;
      next.volumes[action - 1] = 0.0;
      next.pu_counter = busy_time(spec, v);
      next.pu_job = action;
    } else {
      out.info.invalid_action = true;
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto& c = config.containers[i];
    next.volumes[i] = fill_step(next.volumes[i], c.alpha, c.sigma, rng);
  }
  if (next.pu_counter > 0 && --next.pu_counter == 0) next.pu_job.reset();
  ++next.t;

  for (int i = 0; i < n; ++i) {
    if (next.volumes[i] > config.overflow_limit) {
      out.info.overflowed_container = i + 1;
      out.reward = config.overflow_penalty;
      out.terminated = true;
      break;
    }
  }
  if (!out.terminated && next.t >= config.episode_length) {
    out.terminated = true;
    out.info.truncated = true;
  }
  out.info.collision_now = is_collision_state(next, config);
  return out;
}

bool is_collision_state(const FacilityState& state, const FacilityConfig& config,
                        double proximity_margin) {
  if (state.pu_counter <= 0) return false;
  int near = 0;
  for (int i = 0; i < config.size(); ++i) {
    if (state.volumes[i] >= config.containers[i].peak_high - proximity_margin &&
        ++near >= 2)
      return true;
  }
  return false;
}

std::vector<double> observation(const FacilityState& state,
                                const FacilityConfig& config) {
  const int n = config.size();
  std::vector<double> obs;
  obs.reserve(observation_size(n));
  for (double v : state.volumes) obs.push_back(v / config.overflow_limit);
  obs.push_back(static_cast<double>(state.pu_counter) / config.max_busy_time());
  for (const auto& c : config.containers) {
    obs.push_back(c.peak_low / config.overflow_limit);
    obs.push_back(c.peak_high / config.overflow_limit);
  }
  return obs;
}

Environment::Environment(FacilityConfig config, RewardParams reward,
                         std::uint64_t seed)
    : config_(std::move(config)), reward_(reward), rng_(seed) {
  config_.validate();
  reset(seed);
}

const FacilityState& Environment::reset(
    std::uint64_t seed, std::optional<std::span<const double>> init) {
  state_ = contmgr::reset(config_, derive_seed(seed, 0), init);
  rng_ = Rng(derive_seed(seed, 1));
  prev_volumes_ = state_.volumes;
  done_ = false;
  return state_;
}

StepOutcome Environment::step(int action) {
  if (done_) fail(ErrorCode::kInvalidArgument, "step: episode already finished");
  StepOutcome out = contmgr::step(state_, action, config_, reward_, rng_);
  prev_volumes_ = state_.volumes;
  state_ = out.next_state;
  done_ = out.terminated;
  return out;
}

std::string trajectory_record(const StepOutcome& outcome, int action) {
  using nlohmann::json;
  const auto& s = outcome.next_state;
  const auto& info = outcome.info;
  json flags = {{"invalid", info.invalid_action},
                {"collision", info.collision_now},
                {"terminated", outcome.terminated}};
  flags["emptied"] = info.emptied_container ? json(*info.emptied_container) : json();
  flags["emptied_volume"] = info.emptied_volume ? json(*info.emptied_volume) : json();
  flags["overflow"] = info.overflowed_container ? json(*info.overflowed_container) : json();
  json rec = {{"t", s.t},
              {"volumes", s.volumes},
              {"pu_counter", s.pu_counter},
              {"action", action},
              {"reward", outcome.reward},
              {"flags", flags}};
  return rec.dump();
}

}  // namespace contmgr
