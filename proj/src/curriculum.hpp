#pragma once

#include <array>
#include <string>
#include <vector>

#include "facility.hpp"
#include "ppo.hpp"

namespace contmgr {

struct CurriculumSchedule {
  std::array<long, 3> phase_budgets{};  // environment steps per phase
  double phase2_freeze_fraction = 0.5;
  double phase3_kl_limit = 0.01;

  long total() const { return phase_budgets[0] + phase_budgets[1] + phase_budgets[2]; }
  void validate(const PPOConfig& config) const;

  // 60 / 25 / 15 split of `total_steps`, actor frozen for the first half
  // of phase 2.
  static CurriculumSchedule from_total(long total_steps);
};

struct TrainingLogRow {
  long step = 0;  // cumulative environment steps after the update
  Phase phase = Phase::kPhase1;
  double mean_reward = 0.0;  // mean per-step reward of the rollout
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  bool frozen = false;
};

struct PhaseMarker {
  long step = 0;
  Phase phase = Phase::kPhase1;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  std::vector<PhaseMarker> markers;
  std::vector<double> episode_returns;  // completed episodes, in order

  // CSV with header `step,phase,mean_reward,mean_kl,clip_fraction`; phase
  // boundaries appear as `# boundary step=<s> phase=<name>` lines.
  std::string to_csv(const std::string& manifest_hash = {}) const;
};

struct TrainResult {
  PolicyParams params;
  TrainingLog log;
  // Actor parameters at the end of each phase that ran.
  std::vector<Vector> phase_end_actor;
};

// Three-phase reward curriculum: unimodal, bimodal with a frozen-actor
// window, then step reward under the tighter KL limit. The critic carries
// over between phases.
TrainResult train_curriculum(const PPOConfig& config,
                             const FacilityConfig& facility,
                             const CurriculumSchedule& schedule);

// Single phase on the bimodal (phase 2) reward for `total_steps`.
TrainResult train_naive(const PPOConfig& config, const FacilityConfig& facility,
                        long total_steps);

// Mean episode return of the uniform random policy under `phase`.
double random_policy_return(const FacilityConfig& facility, Phase phase,
                            int episodes, std::uint64_t seed);

}  // namespace contmgr
