#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facility.hpp"
#include "reward.hpp"
#include "rng.hpp"

namespace contmgr {

struct FacilityState {
  std::vector<double> volumes;
  int pu_counter = 0;           // steps until the PU is free
  std::optional<int> pu_job;    // container being processed, iff pu_counter > 0
  int t = 0;
};

struct StepInfo {
  bool invalid_action = false;
  std::optional<int> emptied_container;
  std::optional<double> emptied_volume;
  std::optional<int> overflowed_container;
  bool collision_now = false;
  bool truncated = false;  // horizon reached without overflow
};

struct StepOutcome {
  FacilityState next_state;
  double reward = 0.0;
  bool terminated = false;
  StepInfo info;
};

// One step of the drifting random walk, clipped at zero. Always consumes
// exactly one normal variate so that streams stay aligned for sigma == 0.
double fill_step(double v, double alpha, double sigma, Rng& rng);

// PU occupancy for emptying `v` units; at least one step.
int busy_time(const ContainerSpec& spec, double v);

// Initial state. Without `init_volumes` each container starts uniform in
// [0, peak_low) drawn from a generator seeded with `seed`.
FacilityState reset(const FacilityConfig& config, std::uint64_t seed,
                    std::optional<std::span<const double>> init_volumes = {});

// Applies `action` (0 = no-op, i = empty container i) and advances time.
StepOutcome step(const FacilityState& state, int action,
                 const FacilityConfig& config, const RewardParams& reward,
                 Rng& rng);

// PU busy and at least two containers within `proximity_margin` of (or
// above) their higher peak.
bool is_collision_state(const FacilityState& state, const FacilityConfig& config,
                        double proximity_margin);
inline bool is_collision_state(const FacilityState& state,
                               const FacilityConfig& config) {
  return is_collision_state(state, config, config.proximity_margin);
}

// Normalized feature vector of length 3n + 1:
//   v_i / limit (n), pu_counter / max_busy (1), (low_i, high_i) / limit (2n).
std::vector<double> observation(const FacilityState& state,
                                const FacilityConfig& config);
inline int observation_size(int n) { return 3 * n + 1; }

// Stateful wrapper bundling config, reward regime, state and generator.
// Also keeps the previous step's volumes for lag features.
class Environment {
 public:
  Environment(FacilityConfig config, RewardParams reward, std::uint64_t seed);

  const FacilityState& reset(std::uint64_t seed,
                             std::optional<std::span<const double>> init = {});
  StepOutcome step(int action);

  const FacilityConfig& config() const { return config_; }
  const FacilityState& state() const { return state_; }
  const std::vector<double>& previous_volumes() const { return prev_volumes_; }
  std::vector<double> observation() const {
    return contmgr::observation(state_, config_);
  }
  void set_reward(const RewardParams& reward) { reward_ = reward; }
  bool done() const { return done_; }

 private:
  FacilityConfig config_;
  RewardParams reward_;
  Rng rng_;
  FacilityState state_;
  std::vector<double> prev_volumes_;
  bool done_ = false;
};

// One JSON-lines record of a trajectory dump (no trailing newline).
std::string trajectory_record(const StepOutcome& outcome, int action);

}  // namespace contmgr
