#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"

namespace contmgr {

inline constexpr int kPairFeatures = 10;
using PairFeatures = std::array<double, kPairFeatures>;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// PU behaviour inside a pair rollout. Besides serving the pair, the PU takes
// jobs from the rest of the facility: whenever it is idle and neither pair
// container is due, a background job arrives with `background_rate` and
// occupies the PU for busy_time of a volume drawn from the high-peak range.
struct PairPuModel {
  double busy_slope = 0.25;
  double busy_offset = 3.0;
  double background_rate = 0.1;
};

struct PairRolloutConfig {
  Range mu_range{0.05, 0.5};
  Range sigma_range{0.005, 0.05};
  Range peak_low_range{12.0, 16.0};
  Range peak_high_range{24.0, 30.0};
  int horizon = 20;
  long repetitions = 100000;
  double proximity_margin = 3.0;
  PairPuModel pu_model;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct PairParams {
  double mu_i = 0, sigma_i = 0, mu_j = 0, sigma_j = 0;
  double peak_i = 0, peak_j = 0;  // higher peaks
  double low_i = 0, low_j = 0;    // lower peaks (carried for completeness)
};

struct PairSnapshot {
  double v_i = 0.0;
  double v_j = 0.0;
  int pu_counter = 0;
};

struct PairTrace {
  PairParams params;
  std::vector<PairSnapshot> states;  // tau = 0..horizon
  std::vector<std::uint8_t> labels;  // one per state
};

PairParams sample_pair_params(const PairRolloutConfig& config, Rng& rng);

// Collision indicator for one snapshot: PU busy and both containers within
// `margin` of (or above) their higher peaks.
bool pair_collision_label(const PairSnapshot& s, const PairParams& p,
                          double margin);

// Starts from volumes uniform in [0, peak) and applies, per step: PU
// service (the first container at or above its peak, larger overshoot
// first; otherwise a possible background job), fill, counter decrement.
PairTrace simulate_pair(const PairParams& params, const PairRolloutConfig& config,
                        Rng& rng);
// Same dynamics from given initial volumes.
PairTrace simulate_pair_from(const PairParams& params, double v_i0, double v_j0,
                             const PairRolloutConfig& config, Rng& rng);

// [v_i, v_j, p_i - v_i, p_j - v_j, mu_i, sigma_i, mu_j, sigma_j,
//  v_i(tau-1), v_j(tau-1)]
PairFeatures pair_features(double v_i, double v_j, double peak_i, double peak_j,
                           double mu_i, double sigma_i, double mu_j,
                           double sigma_j, double prev_v_i, double prev_v_j);
// Empty at tau == 0 (no lag available).
std::optional<PairFeatures> extract_features(const PairTrace& trace, int tau);

struct Dataset {
  std::vector<double> features;  // row-major, kPairFeatures per sample
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t k) const { return features.data() + k * kPairFeatures; }
  void add(const PairFeatures& f, std::uint8_t y) {
    features.insert(features.end(), f.begin(), f.end());
    labels.push_back(y);
  }
  double positive_rate() const;
};

struct DatasetSummary {
  long n_samples = 0;
  long n_positive = 0;
  double positive_rate = 0.0;  // 0 for an empty dataset
};

// Samples of repetition `rep` (seeded from master seed and rep index).
void repetition_samples(const PairRolloutConfig& config, long rep, Dataset& out,
                        std::vector<int>* taus = nullptr);

// In-memory generation; identical content regardless of config.jobs.
Dataset generate_samples(const PairRolloutConfig& config);

// Streams a header line, then JSON lines {"f":[...],"y":0|1,"rep":r,"tau":t}
// to `path` in repetition order, and writes `<path>.summary.json`.
DatasetSummary generate_dataset(const PairRolloutConfig& config,
                                const std::string& path,
                                const std::string& manifest_hash = {});

Dataset load_dataset(const std::string& path);

}  // namespace contmgr
