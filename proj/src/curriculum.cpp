#include "curriculum.hpp"

#include <cmath>
#include <sstream>

#include "error.hpp"

namespace contmgr {

void CurriculumSchedule::validate(const PPOConfig& config) const {
  for (long b : phase_budgets)
    require(b >= config.rollout_steps,
            "curriculum: every phase budget must cover at least one rollout");
  require(phase2_freeze_fraction >= 0.0 && phase2_freeze_fraction <= 1.0,
          "curriculum: freeze fraction must be in [0, 1]");
  require(phase3_kl_limit > 0.0 && phase3_kl_limit < config.kl_limit,
          "curriculum: phase 3 KL limit must be positive and below kl_limit");
}

CurriculumSchedule CurriculumSchedule::from_total(long total_steps) {
  CurriculumSchedule s;
  s.phase_budgets[0] = static_cast<long>(std::llround(0.60 * total_steps));
  s.phase_budgets[1] = static_cast<long>(std::llround(0.25 * total_steps));
  s.phase_budgets[2] = total_steps - s.phase_budgets[0] - s.phase_budgets[1];
  return s;
}

std::string TrainingLog::to_csv(const std::string& manifest_hash) const {
  std::ostringstream out;
  out.precision(10);
  if (!manifest_hash.empty()) out << "# contmgr training log manifest=" << manifest_hash << "\n";
  out << "step,phase,mean_reward,mean_kl,clip_fraction\n";
  std::size_t m = 0;
  for (const auto& r : rows) {
    while (m < markers.size() && markers[m].step <= r.step - 1) {
      out << "# boundary step=" << markers[m].step
          << " phase=" << phase_name(markers[m].phase) << "\n";
      ++m;
    }
    out << r.step << ',' << phase_name(r.phase) << ',' << r.mean_reward << ','
        << r.mean_kl << ',' << r.clip_fraction << "\n";
  }
  for (; m < markers.size(); ++m)
    out << "# boundary step=" << markers[m].step
        << " phase=" << phase_name(markers[m].phase) << "\n";
  return out.str();
}

namespace {

struct PhasePlan {
  Phase phase;
  long budget;
  int frozen_updates;
  double kl_limit;
};

TrainResult run_phases(const PPOConfig& config, const FacilityConfig& facility,
                       const std::vector<PhasePlan>& plan) {
  config.validate();
  facility.validate();
  TrainResult result;
  PolicyParams init = make_policy(facility.size(), derive_seed(config.seed, 1), config.hidden);
  if (config.initial_noop_probability > 0.0)
    set_noop_prior(init, config.initial_noop_probability);
  PpoLearner learner(std::move(init), config);
  Rng act_rng(derive_seed(config.seed, 2));
  Rng update_rng(derive_seed(config.seed, 3));
  Rng episode_seeds(derive_seed(config.seed, 4));
  Environment env(facility, facility.reward_params(plan.front().phase),
                  episode_seeds.next_u64());

  long steps = 0;
  for (const PhasePlan& ph : plan) {
    result.log.markers.push_back({steps, ph.phase});
    env.set_reward(facility.reward_params(ph.phase));
    reset_episode(env, episode_seeds.next_u64(), config.exploring_starts);
    double running = 0.0;
    learner.config().kl_limit = ph.kl_limit;
    const long updates = std::max<long>(1, ph.budget / config.rollout_steps);
    for (long u = 0; u < updates; ++u) {
      learner.config().freeze_actor = u < ph.frozen_updates;
      Trajectory tr = collect_rollout(env, learner.params(), config.rollout_steps,
                                      act_rng, episode_seeds,
                                      &result.log.episode_returns, &running,
                                      config.exploring_starts);
      const UpdateStats st = learner.update(tr, update_rng);
      steps += static_cast<long>(tr.size());
      double mean_r = 0.0;
      for (double r : tr.rewards) mean_r += r;
      mean_r /= static_cast<double>(tr.size());
      result.log.rows.push_back({steps, ph.phase, mean_r, st.mean_kl,
                                 st.clip_fraction, learner.config().freeze_actor});
    }
    result.phase_end_actor.push_back(learner.params().actor.params());
  }
  learner.config().freeze_actor = false;
  result.params = learner.params();
  return result;
}

}  // namespace

TrainResult train_curriculum(const PPOConfig& config,
                             const FacilityConfig& facility,
                             const CurriculumSchedule& schedule) {
  schedule.validate(config);
  const long p2_updates = std::max<long>(1, schedule.phase_budgets[1] / config.rollout_steps);
  const int frozen = static_cast<int>(
      std::floor(schedule.phase2_freeze_fraction * static_cast<double>(p2_updates)));
  std::vector<PhasePlan> plan{
      {Phase::kPhase1, schedule.phase_budgets[0], 0, config.kl_limit},
      {Phase::kPhase2, schedule.phase_budgets[1], frozen, config.kl_limit},
      {Phase::kPhase3, schedule.phase_budgets[2], 0, schedule.phase3_kl_limit},
  };
  return run_phases(config, facility, plan);
}

TrainResult train_naive(const PPOConfig& config, const FacilityConfig& facility,
                        long total_steps) {
  require(total_steps >= config.rollout_steps,
          "naive: budget must cover at least one rollout");
  return run_phases(config, facility,
                    {{Phase::kPhase2, total_steps, 0, config.kl_limit}});
}

double random_policy_return(const FacilityConfig& facility, Phase phase,
                            int episodes, std::uint64_t seed) {
  require(episodes > 0, "random_policy_return: episodes must be positive");
  Rng rng(derive_seed(seed, 7));
  Environment env(facility, facility.reward_params(phase), seed);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    env.reset(derive_seed(seed, 8, e));
    while (!env.done()) {
      const int a = static_cast<int>(rng.below(facility.size() + 1));
      total += env.step(a).reward;
    }
  }
  return total / episodes;
}

}  // namespace contmgr
