#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "boosted_trees.hpp"
#include "env.hpp"
#include "override.hpp"
#include "ppo.hpp"

namespace contmgr {

struct EpisodeMetrics {
  int press_idle_time = 0;
  double total_volume_processed = 0.0;
  int collision_timesteps = 0;
  double total_volume_deviation = 0.0;  // % of overflow_limit
  double actions_per_container_mean = 0.0;
  double actions_per_container_std = 0.0;
  double reward_per_action = 0.0;
  double higher_lower_peak_ratio = 0.0;  // n_high / max(n_low, 1)
  double safety_violations_pct = 0.0;
  bool terminated_early = false;

  int steps = 0;
  int n_empties = 0;
  int n_high = 0;
  int n_low = 0;
  int n_invalid = 0;
  int n_overrides = 0;
  double total_reward = 0.0;
};

// Chooses an action from the live environment (state plus lag volumes).
using DecideFn = std::function<int(const FacilityState&, std::span<const double>)>;

struct EpisodeOptions {
  Phase reward_phase = Phase::kPhase3;  // reward used for reward_per_action
  double safety_margin = 5.0;           // critical volume above the high peak
  std::ostream* dump = nullptr;         // optional JSON-lines trajectory
  int* overrides = nullptr;
};

EpisodeMetrics run_episode(const FacilityConfig& facility, const DecideFn& decide_fn,
                           std::uint64_t seed, const EpisodeOptions& options = {});

// Mean / sample standard deviation (n - 1; 0 for fewer than two values) /
// coefficient of variation 100 * std / mean (0 when the series is constant).
struct SeriesStats {
  double mean = 0.0;
  double std = 0.0;
  double cv_pct = 0.0;
};
SeriesStats series_stats(std::span<const double> xs);
double cv_percent(std::span<const double> xs);

enum class Method { kNaive, kCurriculum, kCurriculumCm };
const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& s);

struct EpisodeRow {
  int seed = 0;
  int rollout = 0;
  EpisodeMetrics metrics;
};

struct SeedSummary {
  int seed = 0;
  SeriesStats collisions;
  SeriesStats volume_deviation;
  SeriesStats idle_time;
  SeriesStats volume_processed;
  SeriesStats safety_pct;
  double reward_per_action = 0.0;
  double peak_ratio = 0.0;  // pooled n_high / max(n_low, 1)
  SeriesStats actions_per_container;
};

struct AggregateReport {
  Method method = Method::kCurriculum;
  std::string facility;
  double theta = 1.0;
  std::vector<EpisodeRow> rows;  // sorted by (seed, rollout)
  std::vector<SeedSummary> seeds;
  int best_seed = 0;
  int median_seed = 0;

  // Across all rows.
  SeriesStats metric(const std::function<double(const EpisodeMetrics&)>& f) const;
  double pooled_peak_ratio() const;
  const SeedSummary& seed_summary(int seed) const;
};

struct EvalSettings {
  int n_rollouts = 3;
  std::uint64_t base_seed = 0;
  int jobs = 1;
  EpisodeOptions episode;
};

// Evaluates one policy per seed. For kCurriculumCm `model` and `override`
// must be present. Environment noise and policy sampling streams depend
// only on (base_seed, seed, rollout), so methods are compared on
// identical inflow realizations.
AggregateReport evaluate_method(Method method, const FacilityConfig& facility,
                                const std::vector<PolicyParams>& policies,
                                const BoostedEnsemble* model,
                                const std::optional<OverrideConfig>& override_cfg,
                                const EvalSettings& settings);

// Best seed: fewest mean collision timesteps (ties to lower index). Median
// seed: lower median of the remaining seeds by the same metric.
std::pair<int, int> select_best_and_median(const std::vector<SeedSummary>& seeds);

struct SweepRow {
  double theta = 0.0;
  SeriesStats collisions;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double best_theta = 0.0;  // lowest CV%, ties to the smaller theta
};

SweepResult threshold_sweep(const FacilityConfig& facility,
                            const std::vector<PolicyParams>& policies,
                            const BoostedEnsemble& model,
                            const OverrideConfig& base, std::vector<double> grid,
                            const EvalSettings& settings);

// Reports. All text is deterministic for identical inputs.
std::string report_csv(const AggregateReport& report, const std::string& manifest_hash);
std::string report_summary_json(const AggregateReport& report,
                                 const std::string& manifest_hash);
std::string sweep_csv(const SweepResult& sweep, const std::string& manifest_hash);
// Plot-ready rows: idle time, processed volume and safety violations.
std::string plot_csv(const AggregateReport& report, const std::string& manifest_hash);

// Re-counts collision timesteps from a trajectory dump.
int recount_collisions(std::istream& dump, const FacilityConfig& facility);

}  // namespace contmgr
