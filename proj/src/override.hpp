#pragma once

#include <optional>
#include <span>
#include <vector>

#include "boosted_trees.hpp"
#include "env.hpp"
#include "ppo.hpp"

namespace contmgr {

struct OverrideConfig {
  double theta = 0.5;          // risk threshold
  double delta = 3.0;          // candidate margin below the higher peak
  bool require_pu_free = true; // only override when the PU can accept a job

  void validate() const;
};

// Symmetric matrix of pairwise collision probabilities; the diagonal is 0
// and unused.
struct RiskMatrix {
  int n = 0;
  std::vector<double> values;  // row-major n x n

  double at(int i, int j) const { return values[i * n + j]; }  // 0-based
};

struct RiskAssessment {
  RiskMatrix pairwise;
  std::vector<int> candidates;     // container ids (1-based)
  std::vector<double> scores;      // risk score per candidate
  std::optional<int> chosen;       // override target if any
  int classifier_calls = 0;
};

// Features of the ordered pair (i, j), 0-based indices, from live state.
PairFeatures live_pair_features(const FacilityState& state,
                                std::span<const double> prev_volumes,
                                const FacilityConfig& config, int i, int j);

// One classifier call per unordered pair, mirrored. Within a pair the
// container with the smaller (volume, lag, peak, alpha, sigma) tuple takes
// the i slot. Missing lag history (empty `prev_volumes`) is backfilled with
// the current volumes.
RiskMatrix pairwise_risk(const FacilityState& state,
                         std::span<const double> prev_volumes,
                         const FacilityConfig& config,
                         const BoostedEnsemble& model, int* calls = nullptr);

// Row maximum over j != i (0-based i). 0 for a single container.
double risk_score(int i, const RiskMatrix& matrix);

struct Decision {
  int action = 0;
  int proposed = 0;
  bool overridden = false;
  int classifier_calls = 0;
  std::optional<RiskAssessment> assessment;  // present when the CM ran
};

// Override logic given the policy's proposal: non-zero proposals pass
// through untouched; a no-op may be replaced by the highest-risk
// candidate (ties to the lowest id) when its score reaches theta.
Decision decide_with_proposal(const FacilityState& state,
                              std::span<const double> prev_volumes,
                              int proposed, const FacilityConfig& config,
                              const BoostedEnsemble& model,
                              const OverrideConfig& override_cfg);

// Samples the proposal from `policy` and applies the override logic.
Decision decide(const FacilityState& state, std::span<const double> prev_volumes,
                const PolicyParams& policy, const FacilityConfig& config,
                const BoostedEnsemble& model, const OverrideConfig& override_cfg,
                Rng& rng);

}  // namespace contmgr
