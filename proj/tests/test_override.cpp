#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "error.hpp"
#include "override.hpp"

using namespace contmgr;

namespace {

// Hand-built ensemble: risk rises as either container nears its peak.
BoostedEnsemble proximity_model() {
  BoostedEnsemble m;
  m.learning_rate = 1.0;
  m.base_score = -2.0;
  for (int feature : {2, 3}) {
    DecisionTree t;
    t.nodes.push_back({feature, 2.0, 1, 2, 0.0});
    t.nodes.push_back({-1, 0.0, -1, -1, 1.5});
    t.nodes.push_back({-1, 0.0, -1, -1, -0.5});
    m.trees.push_back(t);
  }
  // Fill rate of i matters a little so that scores are not all tied.
  DecisionTree t;
  t.nodes.push_back({4, 0.2, 1, 2, 0.0});
  t.nodes.push_back({-1, 0.0, -1, -1, 0.0});
  t.nodes.push_back({-1, 0.0, -1, -1, 0.25});
  m.trees.push_back(t);
  return m;
}

FacilityConfig facility(int n) { return default_facility(n, 42); }

// Straight-line reading of the override procedure.
int interpreter(const FacilityState& s, std::span<const double> prev, int proposed,
                const FacilityConfig& c, const BoostedEnsemble& m, double theta,
                double delta, bool pu_free) {
  if (proposed != 0) return proposed;
  const int n = c.size();
  std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      auto lag = [&](int k) { return prev.empty() ? s.volumes[k] : prev[k]; };
      auto key = [&](int k) {
        const auto& ck = c.containers[k];
        return std::make_tuple(s.volumes[k], lag(k), ck.peak_high, ck.alpha, ck.sigma);
      };
      const int a = key(i) <= key(j) ? i : j;
      const int b = a == i ? j : i;
      const double pa = lag(a), pb = lag(b);
      const auto& ca = c.containers[a];
      const auto& cb = c.containers[b];
      const PairFeatures f{s.volumes[a], s.volumes[b], ca.peak_high - s.volumes[a],
                           cb.peak_high - s.volumes[b], ca.alpha, ca.sigma,
                           cb.alpha, cb.sigma, pa, pb};
      P[i][j] = predict_proba(m, f);
    }
  std::vector<int> cand;
  for (int i = 0; i < n; ++i)
    if (s.volumes[i] >= c.containers[i].peak_high - delta) cand.push_back(i);
  if (cand.empty()) return 0;
  int best = -1;
  double best_score = -1.0;
  for (int i : cand) {
    double score = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) score = std::max(score, P[i][j]);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best_score < theta) return 0;
  if (pu_free && s.pu_counter != 0) return 0;
  return best + 1;
}

FacilityState random_state(const FacilityConfig& c, Rng& rng) {
  FacilityState s;
  for (const auto& ct : c.containers) s.volumes.push_back(rng.uniform(0.0, ct.peak_high + 4.0));
  s.pu_counter = rng.uniform() < 0.5 ? 0 : 1 + static_cast<int>(rng.below(8));
  return s;
}

}  // namespace

TEST_CASE("classifier calls and symmetry") {
  const auto m = proximity_model();
  for (int n : {2, 3, 7, 12}) {
    const auto c = facility(n);
    Rng rng(n);
    const auto s = random_state(c, rng);
    int calls = 0;
    const auto P = pairwise_risk(s, {}, c, m, &calls);
    CHECK(calls == n * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) {
          CHECK(P.at(i, j) == P.at(j, i));
          CHECK(P.at(i, j) > 0.0);
          CHECK(P.at(i, j) < 1.0);
        }
  }
}

TEST_CASE("live features agree with the offline feature extractor") {
  const auto c = facility(3);
  FacilityState s;
  s.volumes = {20.0, 25.0, 3.0};
  const std::vector<double> prev{19.5, 24.0, 2.9};
  const auto live = live_pair_features(s, prev, c, 0, 1);
  PairTrace t;
  t.params.peak_i = c.containers[0].peak_high;
  t.params.peak_j = c.containers[1].peak_high;
  t.params.mu_i = c.containers[0].alpha;
  t.params.sigma_i = c.containers[0].sigma;
  t.params.mu_j = c.containers[1].alpha;
  t.params.sigma_j = c.containers[1].sigma;
  t.states = {{19.5, 24.0, 0}, {20.0, 25.0, 0}};
  CHECK(live == *extract_features(t, 1));
  // Missing history: lag equals the current volume.
  const auto cold = live_pair_features(s, {}, c, 0, 1);
  CHECK(cold[8] == 20.0);
  CHECK(cold[9] == 25.0);
}

TEST_CASE("risk score is the row maximum") {
  RiskMatrix m{3, {0.0, 0.9, 0.1, 0.9, 0.0, 0.1, 0.1, 0.1, 0.0}};
  CHECK(risk_score(0, m) == 0.9);
  CHECK(risk_score(2, m) == 0.1);
  RiskMatrix z{2, {0.0, 1e-12, 1e-12, 0.0}};
  CHECK(risk_score(0, z) == doctest::Approx(0.0));
  RiskMatrix one{1, {0.0}};
  CHECK(risk_score(0, one) == 0.0);
}

TEST_CASE("non-zero proposals pass through without classifier calls") {
  const auto c = facility(5);
  FacilityState s;
  s.volumes = {30, 30, 30, 30, 30};
  const auto d = decide_with_proposal(s, {}, 3, c, proximity_model(), {0.0, 3.0, true});
  CHECK(d.action == 3);
  CHECK_FALSE(d.overridden);
  CHECK(d.classifier_calls == 0);
  CHECK_FALSE(d.assessment.has_value());
}

TEST_CASE("theta = 0 with a single candidate overrides onto it") {
  const auto c = facility(4);
  FacilityState s;
  s.volumes = {1.0, c.containers[1].peak_high - 1.0, 2.0, 0.5};
  const auto d = decide_with_proposal(s, {}, 0, c, proximity_model(), {0.0, 3.0, true});
  CHECK(d.overridden);
  CHECK(d.action == 2);
  CHECK(interpreter(s, {}, 0, c, proximity_model(), 0.0, 3.0, true) == 2);
  REQUIRE(d.assessment);
  CHECK(d.assessment->candidates == std::vector<int>{2});

  s.pu_counter = 4;
  CHECK(decide_with_proposal(s, {}, 0, c, proximity_model(), {0.0, 3.0, true}).action == 0);
  CHECK(decide_with_proposal(s, {}, 0, c, proximity_model(), {0.0, 3.0, false}).action == 2);
}

TEST_CASE("no candidates means no override") {
  const auto c = facility(3);
  FacilityState s;
  s.volumes = {1.0, 2.0, 3.0};
  const auto d = decide_with_proposal(s, {}, 0, c, proximity_model(), {0.0, 3.0, true});
  CHECK(d.action == 0);
  CHECK(d.classifier_calls == 3);
}

TEST_CASE("ties resolve to the lowest container id") {
  FacilityConfig c = facility(3);
  for (auto& ct : c.containers) {
    ct.alpha = 0.1;
    ct.sigma = 0.01;
    ct.peak_high = 27.0;
  }
  FacilityState s;
  s.volumes = {26.0, 26.0, 26.0};
  const auto d = decide_with_proposal(s, {}, 0, c, proximity_model(), {0.0, 3.0, true});
  CHECK(d.action == 1);
}

TEST_CASE("matches the line-by-line interpreter on random states") {
  const auto m = proximity_model();
  Rng rng(77);
  for (int k = 0; k < 3000; ++k) {
    const int n = 2 + static_cast<int>(rng.below(9));
    const auto c = facility(n);
    const auto s = random_state(c, rng);
    std::vector<double> prev;
    if (rng.uniform() < 0.5)
      for (double v : s.volumes) prev.push_back(std::max(0.0, v - rng.uniform(0.0, 0.5)));
    const int proposed = rng.uniform() < 0.7 ? 0 : 1 + static_cast<int>(rng.below(n));
    const double theta = rng.uniform();
    const double delta = rng.uniform(0.0, 6.0);
    const bool pu_free = rng.uniform() < 0.5;
    const auto d = decide_with_proposal(s, prev, proposed, c, m, {theta, delta, pu_free});
    REQUIRE(d.action == interpreter(s, prev, proposed, c, m, theta, delta, pu_free));
    CHECK(d.classifier_calls <= n * (n - 1) / 2);
  }
}

TEST_CASE("overrides fire on a down-closed theta interval") {
  const auto m = proximity_model();
  const auto c = facility(6);
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    auto s = random_state(c, rng);
    s.pu_counter = 0;
    bool seen_off = false;
    for (double theta = 0.0; theta <= 1.0; theta += 0.01) {
      const bool on = decide_with_proposal(s, {}, 0, c, m, {theta, 3.0, true}).overridden;
      if (!on) seen_off = true;
      CHECK_FALSE((on && seen_off));
    }
  }
}

TEST_CASE("relabeling containers permutes the scores") {
  const auto m = proximity_model();
  const auto c = facility(5);
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_state(c, rng);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 4; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    FacilityConfig pc = c;
    FacilityState ps = s;
    for (int i = 0; i < 5; ++i) {
      pc.containers[i] = c.containers[perm[i]];
      pc.containers[i].id = i + 1;
      ps.volumes[i] = s.volumes[perm[i]];
    }
    const auto P = pairwise_risk(s, {}, c, m);
    const auto Q = pairwise_risk(ps, {}, pc, m);
    for (int i = 0; i < 5; ++i) CHECK(risk_score(i, Q) == risk_score(perm[i], P));
  }
}

TEST_CASE("theta = 1 never overrides") {
  const auto m = proximity_model();
  const auto c = facility(7);
  const auto policy = make_policy(7, 3);
  Environment a(c, c.reward_params(Phase::kPhase3), 1), b(c, c.reward_params(Phase::kPhase3), 1);
  Rng ra(2), rb(2);
  while (!a.done()) {
    const int plain = act(policy, a.observation(), ra).action;
    const auto d = decide(b.state(), b.previous_volumes(), policy, c, m, {1.0, 3.0, true}, rb);
    REQUIRE(plain == d.action);
    a.step(plain);
    b.step(d.action);
  }
}

TEST_CASE("override config validation") {
  CHECK_THROWS_AS((OverrideConfig{1.5, 3.0, true}.validate()), Error);
  CHECK_THROWS_AS((OverrideConfig{0.5, -1.0, true}.validate()), Error);
}
