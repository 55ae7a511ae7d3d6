#pragma once

namespace contmgr {

enum class Phase { kPhase1 = 1, kPhase2 = 2, kPhase3 = 3 };

// Shape of the three reward regimes. The penalty is owned by the facility
// config and combined with the shape through `make_reward_params`.
struct RewardShape {
  double h = 1.0;   // phase 1 height
  double w = 2.0;   // phase 1 width
  double h1 = 0.5;  // phase 2 height at the lower peak
  double h2 = 1.0;  // phase 2 height at the higher peak
  double w1 = 2.0;
  double w2 = 2.0;
  double window = 1.0;  // phase 3 half-width around either peak
};

struct RewardParams {
  Phase phase = Phase::kPhase1;
  RewardShape shape;
  double penalty = -1.0;

  void validate() const;
};

RewardParams make_reward_params(Phase phase, const RewardShape& shape,
                                double penalty);

// Reward for one decision. `volume` is the volume of the targeted container
// at decision time; it is ignored for no-ops and invalid empties.
double compute_reward(const RewardParams& params, double volume, int action,
                      bool valid, double peak_low, double peak_high);

const char* phase_name(Phase phase);

}  // namespace contmgr
