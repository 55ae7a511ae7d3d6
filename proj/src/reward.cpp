#include "reward.hpp"

#include <cmath>

#include "error.hpp"

namespace contmgr {

namespace {

double gaussian(double v, double center, double width) {
  const double d = v - center;
  return std::exp(-(d * d) / (2.0 * width * width));
}

}  // namespace

void RewardParams::validate() const {
  require(shape.h > 0.0, "reward: h must be positive");
  require(shape.h1 > 0.0 && shape.h2 > shape.h1,
          "reward: need h2 > h1 > 0 (higher peak must dominate)");
  require(shape.w > 0.0 && shape.w1 > 0.0 && shape.w2 > 0.0,
          "reward: widths must be positive");
  require(shape.window > 0.0, "reward: window must be positive");
  require(penalty < 0.0, "reward: penalty must be negative");
}

RewardParams make_reward_params(Phase phase, const RewardShape& shape,
                                double penalty) {
  RewardParams p{phase, shape, penalty};
  p.validate();
  return p;
}

double compute_reward(const RewardParams& params, double volume, int action,
                      bool valid, double peak_low, double peak_high) {
  if (action == 0) return 0.0;
  const double pen = params.penalty;
  if (!valid) return pen;
  const RewardShape& s = params.shape;
  switch (params.phase) {
    case Phase::kPhase1:
      return (s.h - pen) * gaussian(volume, peak_high, s.w) + pen;
    case Phase::kPhase2:
      return pen + (s.h1 - pen) * gaussian(volume, peak_low, s.w1) +
             (s.h2 - pen) * gaussian(volume, peak_high, s.w2);
    case Phase::kPhase3:
      if (std::abs(volume - peak_low) <= s.window ||
          std::abs(volume - peak_high) <= s.window)
        return 1.0;
      return 0.0;
  }
  return 0.0;
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kPhase1: return "phase1";
    case Phase::kPhase2: return "phase2";
    case Phase::kPhase3: return "phase3";
  }
  return "?";
}

}  // namespace contmgr
