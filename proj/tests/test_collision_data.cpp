#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "collision_data.hpp"
#include "error.hpp"

using namespace contmgr;

namespace {

// Label re-scan written from the definition, independent of the simulator.
std::vector<std::uint8_t> relabel(const PairTrace& t, double margin) {
  std::vector<std::uint8_t> out;
  for (const auto& s : t.states) {
    const bool near_i = t.params.peak_i - s.v_i <= margin;
    const bool near_j = t.params.peak_j - s.v_j <= margin;
    out.push_back(s.pu_counter != 0 && near_i && near_j ? 1 : 0);
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("contmgr_test_" + name)).string();
}

}  // namespace

TEST_CASE("pair parameter sampling") {
  PairRolloutConfig c;
  c.mu_range = {0.2, 0.2};
  Rng rng(1);
  for (int k = 0; k < 100; ++k) CHECK(sample_pair_params(c, rng).mu_i == 0.2);

  PairRolloutConfig d;
  d.mu_range = {0.1, 0.5};
  Rng r2(2);
  for (int k = 0; k < 10000; ++k) {
    const auto p = sample_pair_params(d, r2);
    CHECK(p.mu_i >= 0.1);
    CHECK(p.mu_i <= 0.5);
    CHECK(p.peak_i >= 24.0);
    CHECK(p.peak_i <= 30.0);
  }
  Rng a(3), b(3);
  for (int k = 0; k < 10; ++k) CHECK(sample_pair_params(d, a).peak_j == sample_pair_params(d, b).peak_j);
}

TEST_CASE("idle pairs never collide") {
  PairRolloutConfig c;
  PairParams p;
  p.peak_i = 27.0;
  p.peak_j = 26.0;
  Rng rng(4);
  const auto t = simulate_pair_from(p, 0.0, 0.0, c, rng);
  CHECK(t.states.size() == static_cast<std::size_t>(c.horizon + 1));
  for (auto y : t.labels) CHECK(y == 0);
}

TEST_CASE("engineered collision while the PU serves the other container") {
  PairRolloutConfig c;
  c.pu_model.background_rate = 0.0;
  PairParams p;
  p.mu_i = 0.5;
  p.mu_j = 0.5;
  p.peak_i = 25.0;
  p.peak_j = 25.0;
  Rng rng(5);
  // i is due immediately; j is already within the margin and keeps filling
  // while the PU is busy with i's 25-unit job.
  const auto t = simulate_pair_from(p, 25.5, 23.0, c, rng);
  int positives = 0;
  for (auto y : t.labels) positives += y;
  CHECK(positives == 0);  // i is emptied, so only j stays near its peak

  // Background job keeps the PU busy while both approach their peaks.
  c.pu_model.background_rate = 1.0;
  Rng r2(6);
  const auto u = simulate_pair_from(p, 22.0, 22.5, c, r2);
  positives = 0;
  for (auto y : u.labels) positives += y;
  CHECK(positives >= 1);
  CHECK(u.labels == relabel(u, c.proximity_margin));
}

TEST_CASE("stored labels match an independent re-scan") {
  PairRolloutConfig c;
  Rng rng(7);
  long positives = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto p = sample_pair_params(c, rng);
    const auto t = simulate_pair(p, c, rng);
    REQUIRE(t.labels == relabel(t, c.proximity_margin));
    for (auto y : t.labels) positives += y;
    for (std::size_t s = 0; s < t.states.size(); ++s) CHECK(t.states[s].v_i >= 0.0);
  }
  CHECK(positives > 0);
}

TEST_CASE("feature extraction") {
  PairRolloutConfig c;
  Rng rng(8);
  const auto p = sample_pair_params(c, rng);
  const auto t = simulate_pair(p, c, rng);
  CHECK_FALSE(extract_features(t, 0).has_value());
  for (int tau = 1; tau <= c.horizon; ++tau) {
    const auto f = *extract_features(t, tau);
    CHECK(f.size() == 10u);
    CHECK(f[2] + f[0] == p.peak_i);
    CHECK(f[3] + f[1] == p.peak_j);
    CHECK(f[8] == t.states[tau - 1].v_i);
    CHECK(f[9] == t.states[tau - 1].v_j);
    CHECK(f[4] == p.mu_i);
    CHECK(f[7] == p.sigma_j);
  }
  const auto at_peak = pair_features(27.0, 1.0, 27.0, 26.0, 0.1, 0.01, 0.2, 0.02, 26.9, 0.8);
  CHECK(at_peak[2] == 0.0);
}

TEST_CASE("generation is independent of the worker count") {
  PairRolloutConfig c;
  c.repetitions = 3000;
  c.seed = 99;
  const Dataset one = generate_samples(c);
  c.jobs = 3;
  const Dataset three = generate_samples(c);
  CHECK(one.features == three.features);
  CHECK(one.labels == three.labels);
  CHECK(one.size() == 3000u * c.horizon);
}

TEST_CASE("empty and default datasets") {
  PairRolloutConfig c;
  c.repetitions = 0;
  CHECK(generate_samples(c).size() == 0u);
  CHECK(generate_samples(c).positive_rate() == 0.0);

  c.repetitions = 10000;
  c.jobs = 2;
  const double rate = generate_samples(c).positive_rate();
  MESSAGE("positive rate " << rate);
  CHECK(rate > 0.0);
  CHECK(rate < 1.0);
}

TEST_CASE("dataset files are byte-identical for a fixed seed and load back") {
  PairRolloutConfig c;
  c.repetitions = 500;
  c.seed = 4;
  const std::string a = temp_path("a.jsonl"), b = temp_path("b.jsonl");
  const auto sa = generate_dataset(c, a, "m");
  c.jobs = 2;
  generate_dataset(c, b, "m");
  CHECK(slurp(a) == slurp(b));
  const Dataset back = load_dataset(a);
  CHECK(back.size() == static_cast<std::size_t>(sa.n_samples));
  c.jobs = 1;
  const Dataset mem = generate_samples(c);
  CHECK(back.features == mem.features);
  CHECK(back.labels == mem.labels);
  CHECK(std::filesystem::exists(a + ".summary.json"));

  CHECK_THROWS_AS(load_dataset(temp_path("missing.jsonl")), Error);
  std::ofstream(temp_path("bad.jsonl")) << "{\"f\":[1,2],\"y\":0}\n";
  CHECK_THROWS_AS(load_dataset(temp_path("bad.jsonl")), Error);
  for (const auto& p : {a, b, a + ".summary.json", b + ".summary.json", temp_path("bad.jsonl")})
    std::remove(p.c_str());
}

TEST_CASE("config validation") {
  PairRolloutConfig c;
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PairRolloutConfig{};
  c.mu_range = {0.5, 0.1};
  CHECK_THROWS_AS(c.validate(), Error);
}
