#include "override.hpp"

#include <array>

#include "error.hpp"

namespace contmgr {

void OverrideConfig::validate() const {
  require(theta >= 0.0 && theta <= 1.0, "override: theta must be in [0, 1]");
  require(delta >= 0.0, "override: delta must be >= 0");
}

PairFeatures live_pair_features(const FacilityState& state,
                                std::span<const double> prev_volumes,
                                const FacilityConfig& config, int i, int j) {
  const auto& ci = config.containers[i];
  const auto& cj = config.containers[j];
  const bool has_lag = prev_volumes.size() == state.volumes.size();
  const double prev_i = has_lag ? prev_volumes[i] : state.volumes[i];
  const double prev_j = has_lag ? prev_volumes[j] : state.volumes[j];
  return pair_features(state.volumes[i], state.volumes[j], ci.peak_high,
                       cj.peak_high, ci.alpha, ci.sigma, cj.alpha, cj.sigma,
                       prev_i, prev_j);
}

namespace {

// Order in which a pair is presented to the classifier. Depends only on the
// containers' own data, never on their ids, so relabeling containers cannot
// change any prediction.
bool presented_first(const FacilityState& state, std::span<const double> prev,
                     const FacilityConfig& config, int a, int b) {
  const bool has_lag = prev.size() == state.volumes.size();
  auto key = [&](int k) {
    const auto& c = config.containers[k];
    return std::array<double, 5>{state.volumes[k],
                                 has_lag ? prev[k] : state.volumes[k],
                                 c.peak_high, c.alpha, c.sigma};
  };
  return key(a) <= key(b);
}

}  // namespace

RiskMatrix pairwise_risk(const FacilityState& state,
                         std::span<const double> prev_volumes,
                         const FacilityConfig& config,
                         const BoostedEnsemble& model, int* calls) {
  const int n = config.size();
  RiskMatrix m{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool keep = presented_first(state, prev_volumes, config, i, j);
      const PairFeatures f = keep ? live_pair_features(state, prev_volumes, config, i, j)
                                  : live_pair_features(state, prev_volumes, config, j, i);
      const double p = predict_proba(model, f);
      ++count;
      m.values[i * n + j] = p;
      m.values[j * n + i] = p;
    }
  }
  if (calls) *calls += count;
  return m;
}

double risk_score(int i, const RiskMatrix& matrix) {
  require(i >= 0 && i < matrix.n, "risk_score: index out of range");
  double best = 0.0;
  for (int j = 0; j < matrix.n; ++j)
    if (j != i) best = std::max(best, matrix.at(i, j));
  return best;
}

Decision decide_with_proposal(const FacilityState& state,
                              std::span<const double> prev_volumes,
                              int proposed, const FacilityConfig& config,
                              const BoostedEnsemble& model,
                              const OverrideConfig& override_cfg) {
  Decision d;
  d.proposed = proposed;
  d.action = proposed;
  if (proposed != 0) return d;

  RiskAssessment ra;
  ra.pairwise = pairwise_risk(state, prev_volumes, config, model, &ra.classifier_calls);
  for (int i = 0; i < config.size(); ++i)
    if (state.volumes[i] >= config.containers[i].peak_high - override_cfg.delta)
      ra.candidates.push_back(i + 1);

  if (!ra.candidates.empty()) {
    int best_id = 0;
    double best_score = -1.0;
    for (int id : ra.candidates) {
      const double s = risk_score(id - 1, ra.pairwise);
      ra.scores.push_back(s);
      if (s > best_score) {
        best_score = s;
        best_id = id;
      }
    }
    const bool pu_ok = !override_cfg.require_pu_free || state.pu_counter == 0;
    if (best_score >= override_cfg.theta && pu_ok) {
      ra.chosen = best_id;
      d.action = best_id;
      d.overridden = true;
    }
  }
  d.classifier_calls = ra.classifier_calls;
  d.assessment = std::move(ra);
  return d;
}

Decision decide(const FacilityState& state, std::span<const double> prev_volumes,
                const PolicyParams& policy, const FacilityConfig& config,
                const BoostedEnsemble& model, const OverrideConfig& override_cfg,
                Rng& rng) {
  const std::vector<double> obs = observation(state, config);
  const int proposed = act(policy, obs, rng).action;
  return decide_with_proposal(state, prev_volumes, proposed, config, model,
                              override_cfg);
}

}  // namespace contmgr
