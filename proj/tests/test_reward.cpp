#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "reward.hpp"

using namespace contmgr;

namespace {

RewardParams params(Phase p) { return make_reward_params(p, RewardShape{}, -1.0); }

constexpr double kLow = 14.0;
constexpr double kHigh = 27.0;

}  // namespace

TEST_CASE("no-op and invalid empties short-circuit every phase") {
  for (Phase p : {Phase::kPhase1, Phase::kPhase2, Phase::kPhase3}) {
    CHECK(compute_reward(params(p), 27.0, 0, true, kLow, kHigh) == 0.0);
    CHECK(compute_reward(params(p), 27.0, 0, false, kLow, kHigh) == 0.0);
    CHECK(compute_reward(params(p), 27.0, 2, false, kLow, kHigh) == -1.0);
  }
}

TEST_CASE("phase 1 peaks at the higher peak with height h") {
  const auto rp = params(Phase::kPhase1);
  CHECK(compute_reward(rp, kHigh, 1, true, kLow, kHigh) == doctest::Approx(1.0).epsilon(1e-12));
  // Hand evaluation: (h - pen) * exp(-d^2 / (2 w^2)) + pen with d = 2, w = 2.
  const double expect = 2.0 * std::exp(-0.5) - 1.0;
  CHECK(std::abs(compute_reward(rp, kHigh + 2.0, 1, true, kLow, kHigh) - expect) < 1e-12);
  double prev = compute_reward(rp, kHigh, 1, true, kLow, kHigh);
  for (double d = 0.25; d < 10.0; d += 0.25) {
    const double up = compute_reward(rp, kHigh + d, 1, true, kLow, kHigh);
    const double down = compute_reward(rp, kHigh - d, 1, true, kLow, kHigh);
    CHECK(up < prev);
    CHECK(std::abs(up - down) < 1e-12);
    prev = up;
  }
  CHECK(compute_reward(rp, 1e6, 1, true, kLow, kHigh) == doctest::Approx(-1.0));
}

TEST_CASE("phase 2 is bimodal with the higher peak dominant") {
  const auto rp = params(Phase::kPhase2);
  const double at_high = compute_reward(rp, kHigh, 1, true, kLow, kHigh);
  const double cross = 1.5 * std::exp(-(kHigh - kLow) * (kHigh - kLow) / 8.0);
  CHECK(std::abs(at_high - (1.0 + cross)) < 1e-12);
  const double at_low = compute_reward(rp, kLow, 1, true, kLow, kHigh);
  CHECK(at_low >= 0.5 - 1e-12);
  // Grid search: global maximum within w2 of the higher peak.
  double best_v = 0.0, best = -1e9;
  for (double v = 0.0; v <= 40.0; v += 0.01) {
    const double r = compute_reward(rp, v, 1, true, kLow, kHigh);
    if (r > best) {
      best = r;
      best_v = v;
    }
  }
  CHECK(std::abs(best_v - kHigh) <= 2.0);
  CHECK(compute_reward(rp, 1e6, 1, true, kLow, kHigh) == doctest::Approx(-1.0));
}

TEST_CASE("phase 3 is a unit step inside the window around either peak") {
  const auto rp = params(Phase::kPhase3);
  CHECK(compute_reward(rp, kLow + 0.5, 1, true, kLow, kHigh) == 1.0);
  CHECK(compute_reward(rp, kHigh - 1.0, 1, true, kLow, kHigh) == 1.0);
  CHECK(compute_reward(rp, kHigh + 1.0, 1, true, kLow, kHigh) == 1.0);
  CHECK(compute_reward(rp, kHigh + 1.01, 1, true, kLow, kHigh) == 0.0);
  CHECK(compute_reward(rp, 20.0, 1, true, kLow, kHigh) == 0.0);
  for (double d = 0.0; d <= 1.0; d += 0.125) {
    CHECK(compute_reward(rp, kLow + d, 1, true, kLow, kHigh) ==
          compute_reward(rp, kLow - d, 1, true, kLow, kHigh));
  }
  CHECK(compute_reward(rp, 1e6, 1, true, kLow, kHigh) == 0.0);
}

TEST_CASE("parameter validation") {
  RewardShape bad;
  bad.h1 = 1.5;  // lower peak may not dominate
  CHECK_THROWS_AS(make_reward_params(Phase::kPhase2, bad, -1.0), Error);
  CHECK_THROWS_AS(make_reward_params(Phase::kPhase1, RewardShape{}, 0.5), Error);
  RewardShape w0;
  w0.window = 0.0;
  CHECK_THROWS_AS(make_reward_params(Phase::kPhase3, w0, -1.0), Error);
  CHECK(std::string(phase_name(Phase::kPhase2)) == "phase2");
}
