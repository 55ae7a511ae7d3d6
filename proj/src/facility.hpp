#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reward.hpp"

namespace contmgr {

struct ContainerSpec {
  int id = 1;               // 1-based; action i empties container id i
  double alpha = 0.1;       // mean fill per step
  double sigma = 0.01;      // fill noise stddev
  double peak_low = 14.0;
  double peak_high = 27.0;
  double busy_slope = 0.25; // PU steps per volume unit
  double busy_offset = 3.0; // conveyor transport steps
};

struct FacilityConfig {
  std::string name;
  std::vector<ContainerSpec> containers;
  double overflow_limit = 40.0;
  int episode_length = 600;
  double step_seconds = 60.0;
  double penalty = -1.0;
  double overflow_penalty = -10.0;
  double min_empty_volume = 1.0;
  double proximity_margin = 3.0;
  RewardShape reward;

  int size() const { return static_cast<int>(containers.size()); }
  const ContainerSpec& container(int id) const { return containers[id - 1]; }

  // Upper bound of the PU counter, used to normalize observations.
  int max_busy_time() const;

  RewardParams reward_params(Phase phase) const {
    return make_reward_params(phase, reward, penalty);
  }

  void validate() const;
};

// Default facility with `n` containers ("7b1p" for n = 7). Fill rates are
// spaced geometrically over [0.05, 0.5], sigma = 0.1 * alpha, peaks drawn
// from [12, 16] and [24, 30] with a generator seeded by `seed`.
FacilityConfig default_facility(int n, std::uint64_t seed);
// Default facility with the canonical per-size seed.
FacilityConfig default_facility(int n);

std::string facility_to_json(const FacilityConfig& config);
FacilityConfig facility_from_json(const std::string& text);
FacilityConfig load_facility(const std::string& path);
void save_facility(const FacilityConfig& config, const std::string& path);

}  // namespace contmgr
