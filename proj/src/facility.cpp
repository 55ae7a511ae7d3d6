#include "facility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace contmgr {

using nlohmann::json;

int FacilityConfig::max_busy_time() const {
  int best = 1;
  for (const auto& c : containers) {
    best = std::max(best, static_cast<int>(std::ceil(
                              c.busy_slope * overflow_limit + c.busy_offset)));
  }
  return best;
}

void FacilityConfig::validate() const {
  require(!containers.empty(), "facility: at least one container required");
  require(episode_length > 0, "facility: episode_length must be positive");
  require(penalty < 0.0, "facility: penalty must be negative");
  require(overflow_penalty < 0.0, "facility: overflow_penalty must be negative");
  require(overflow_limit > 0.0, "facility: overflow_limit must be positive");
  require(min_empty_volume >= 0.0, "facility: min_empty_volume must be >= 0");
  require(proximity_margin >= 0.0, "facility: proximity_margin must be >= 0");
  for (std::size_t k = 0; k < containers.size(); ++k) {
    const auto& c = containers[k];
    const std::string tag = "facility: container " + std::to_string(k + 1);
    require(c.id == static_cast<int>(k + 1), tag + ": ids must be 1..n in order");
    require(c.alpha > 0.0, tag + ": alpha must be positive");
    require(c.sigma >= 0.0, tag + ": sigma must be >= 0");
    require(c.peak_low > 0.0 && c.peak_low < c.peak_high &&
                c.peak_high < overflow_limit,
            tag + ": need 0 < peak_low < peak_high < overflow_limit");
    require(c.busy_slope > 0.0, tag + ": busy_slope must be positive");
    require(c.busy_offset >= 0.0, tag + ": busy_offset must be >= 0");
  }
  reward_params(Phase::kPhase1).validate();
}

FacilityConfig default_facility(int n, std::uint64_t seed) {
  require(n >= 1, "default_facility: n must be >= 1");
  FacilityConfig cfg;
  cfg.name = std::to_string(n) + "b1p";
  Rng rng(seed);
  const double lo = std::log(0.05), hi = std::log(0.5);
  for (int i = 0; i < n; ++i) {
    ContainerSpec c;
    c.id = i + 1;
    const double frac = n == 1 ? 1.0 : static_cast<double>(i) / (n - 1);
    c.alpha = std::exp(lo + frac * (hi - lo));
    c.sigma = 0.1 * c.alpha;
    c.peak_low = rng.uniform(12.0, 16.0);
    c.peak_high = rng.uniform(24.0, 30.0);
    c.busy_slope = 0.25;
    c.busy_offset = 3.0;
    cfg.containers.push_back(c);
  }
  cfg.validate();
  return cfg;
}

FacilityConfig default_facility(int n) {
  return default_facility(n, 1000 + static_cast<std::uint64_t>(n));
}

std::string facility_to_json(const FacilityConfig& config) {
  json j;
  j["format"] = "contmgr-facility";
  j["version"] = 1;
  j["name"] = config.name;
  j["overflow_limit"] = config.overflow_limit;
  j["episode_length"] = config.episode_length;
  j["step_seconds"] = config.step_seconds;
  j["penalty"] = config.penalty;
  j["overflow_penalty"] = config.overflow_penalty;
  j["min_empty_volume"] = config.min_empty_volume;
  j["proximity_margin"] = config.proximity_margin;
  const auto& r = config.reward;
  j["reward"] = {{"h", r.h},   {"w", r.w},   {"h1", r.h1},
                 {"h2", r.h2}, {"w1", r.w1}, {"w2", r.w2},
                 {"window", r.window}};
  j["containers"] = json::array();
  for (const auto& c : config.containers) {
    j["containers"].push_back({{"id", c.id},
                               {"alpha", c.alpha},
                               {"sigma", c.sigma},
                               {"peak_low", c.peak_low},
                               {"peak_high", c.peak_high},
                               {"busy_slope", c.busy_slope},
                               {"busy_offset", c.busy_offset}});
  }
  return j.dump(2) + "\n";
}

FacilityConfig facility_from_json(const std::string& text) {
  FacilityConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "contmgr-facility")
      fail(ErrorCode::kFormat, "facility: not a contmgr-facility document");
    if (j.value("version", 0) != 1)
      fail(ErrorCode::kFormat, "facility: unsupported version");
    cfg.name = j.value("name", std::string{});
    cfg.overflow_limit = j.value("overflow_limit", cfg.overflow_limit);
    cfg.episode_length = j.value("episode_length", cfg.episode_length);
    cfg.step_seconds = j.value("step_seconds", cfg.step_seconds);
    cfg.penalty = j.value("penalty", cfg.penalty);
    cfg.overflow_penalty = j.value("overflow_penalty", cfg.overflow_penalty);
    cfg.min_empty_volume = j.value("min_empty_volume", cfg.min_empty_volume);
    cfg.proximity_margin = j.value("proximity_margin", cfg.proximity_margin);
    if (j.contains("reward")) {
      const json& r = j.at("reward");
      auto& s = cfg.reward;
      s.h = r.value("h", s.h);
      s.w = r.value("w", s.w);
      s.h1 = r.value("h1", s.h1);
      s.h2 = r.value("h2", s.h2);
      s.w1 = r.value("w1", s.w1);
      s.w2 = r.value("w2", s.w2);
      s.window = r.value("window", s.window);
    }
    for (const json& jc : j.at("containers")) {
      ContainerSpec c;
      c.id = jc.at("id").get<int>();
      c.alpha = jc.at("alpha").get<double>();
      c.sigma = jc.at("sigma").get<double>();
      c.peak_low = jc.at("peak_low").get<double>();
      c.peak_high = jc.at("peak_high").get<double>();
      c.busy_slope = jc.value("busy_slope", c.busy_slope);
      c.busy_offset = jc.value("busy_offset", c.busy_offset);
      cfg.containers.push_back(c);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("facility: malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

FacilityConfig load_facility(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read facility config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return facility_from_json(ss.str());
}

void save_facility(const FacilityConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write facility config '" + path + "'");
  out << facility_to_json(config);
}

}  // namespace contmgr
