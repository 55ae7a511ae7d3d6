#include "collision_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "error.hpp"

namespace contmgr {

void PairRolloutConfig::validate() const {
  auto ok = [](const Range& r) { return r.lo <= r.hi; };
  require(ok(mu_range) && ok(sigma_range) && ok(peak_low_range) &&
              ok(peak_high_range),
          "pair rollout: ranges must satisfy lo <= hi");
  require(mu_range.lo >= 0.0 && sigma_range.lo >= 0.0,
          "pair rollout: fill parameters must be nonnegative");
  require(peak_low_range.hi < peak_high_range.lo,
          "pair rollout: lower peaks must lie below higher peaks");
  require(horizon > 0, "pair rollout: horizon must be positive");
  require(repetitions >= 0, "pair rollout: repetitions must be >= 0");
  require(proximity_margin >= 0.0, "pair rollout: proximity_margin must be >= 0");
  require(pu_model.busy_slope > 0.0 && pu_model.busy_offset >= 0.0,
          "pair rollout: invalid PU busy model");
  require(pu_model.background_rate >= 0.0 && pu_model.background_rate <= 1.0,
          "pair rollout: background_rate must be in [0, 1]");
  require(jobs >= 1, "pair rollout: jobs must be >= 1");
}

PairParams sample_pair_params(const PairRolloutConfig& c, Rng& rng) {
  PairParams p;
  p.mu_i = rng.uniform(c.mu_range.lo, c.mu_range.hi);
  p.sigma_i = rng.uniform(c.sigma_range.lo, c.sigma_range.hi);
  p.mu_j = rng.uniform(c.mu_range.lo, c.mu_range.hi);
  p.sigma_j = rng.uniform(c.sigma_range.lo, c.sigma_range.hi);
  p.low_i = rng.uniform(c.peak_low_range.lo, c.peak_low_range.hi);
  p.peak_i = rng.uniform(c.peak_high_range.lo, c.peak_high_range.hi);
  p.low_j = rng.uniform(c.peak_low_range.lo, c.peak_low_range.hi);
  p.peak_j = rng.uniform(c.peak_high_range.lo, c.peak_high_range.hi);
  return p;
}

bool pair_collision_label(const PairSnapshot& s, const PairParams& p,
                          double margin) {
  return s.pu_counter > 0 && s.v_i >= p.peak_i - margin &&
         s.v_j >= p.peak_j - margin;
}

namespace {

int pair_busy_time(const PairPuModel& m, double v) {
  return std::max(1, static_cast<int>(std::ceil(m.busy_slope * v + m.busy_offset)));
}

}  // namespace

PairTrace simulate_pair_from(const PairParams& params, double v_i0, double v_j0,
                             const PairRolloutConfig& config, Rng& rng) {
  PairTrace tr;
  tr.params = params;
  tr.states.reserve(config.horizon + 1);
  PairSnapshot s{v_i0, v_j0, 0};
  tr.states.push_back(s);
  const PairPuModel& pu = config.pu_model;
  for (int tau = 0; tau < config.horizon; ++tau) {
    if (s.pu_counter == 0) {
      const double over_i = s.v_i - params.peak_i;
      const double over_j = s.v_j - params.peak_j;
      const bool due_i = over_i >= 0.0, due_j = over_j >= 0.0;
      if (due_i && (!due_j || over_i >= over_j)) {
        s.pu_counter = pair_busy_time(pu, s.v_i);
        s.v_i = 0.0;
      } else if (due_j) {
        s.pu_counter = pair_busy_time(pu, s.v_j);
        s.v_j = 0.0;
      } else if (rng.uniform() < pu.background_rate) {
        const double v = rng.uniform(config.peak_high_range.lo,
                                     config.peak_high_range.hi);
        s.pu_counter = pair_busy_time(pu, v);
      }
    }
    s.v_i = std::max(0.0, s.v_i + params.mu_i + params.sigma_i * rng.normal());
    s.v_j = std::max(0.0, s.v_j + params.mu_j + params.sigma_j * rng.normal());
    if (s.pu_counter > 0) --s.pu_counter;
    tr.states.push_back(s);
  }
  tr.labels.reserve(tr.states.size());
  for (const auto& st : tr.states)
    tr.labels.push_back(pair_collision_label(st, params, config.proximity_margin));
  return tr;
}

PairTrace simulate_pair(const PairParams& params, const PairRolloutConfig& config,
                        Rng& rng) {
  const double v_i0 = rng.uniform(0.0, params.peak_i);
  const double v_j0 = rng.uniform(0.0, params.peak_j);
  return simulate_pair_from(params, v_i0, v_j0, config, rng);
}

PairFeatures pair_features(double v_i, double v_j, double peak_i, double peak_j,
                           double mu_i, double sigma_i, double mu_j,
                           double sigma_j, double prev_v_i, double prev_v_j) {
  return {v_i,  v_j,     peak_i - v_i, peak_j - v_j, mu_i,
          sigma_i, mu_j, sigma_j,      prev_v_i,     prev_v_j};
}

std::optional<PairFeatures> extract_features(const PairTrace& trace, int tau) {
  if (tau < 1 || tau >= static_cast<int>(trace.states.size())) return std::nullopt;
  const auto& cur = trace.states[tau];
  const auto& prev = trace.states[tau - 1];
  const auto& p = trace.params;
  return pair_features(cur.v_i, cur.v_j, p.peak_i, p.peak_j, p.mu_i, p.sigma_i,
                       p.mu_j, p.sigma_j, prev.v_i, prev.v_j);
}

double Dataset::positive_rate() const {
  if (labels.empty()) return 0.0;
  long pos = 0;
  for (auto y : labels) pos += y;
  return static_cast<double>(pos) / static_cast<double>(labels.size());
}

void repetition_samples(const PairRolloutConfig& config, long rep, Dataset& out,
                        std::vector<int>* taus) {
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(rep)));
  const PairParams params = sample_pair_params(config, rng);
  const PairTrace tr = simulate_pair(params, config, rng);
  for (int tau = 1; tau < static_cast<int>(tr.states.size()); ++tau) {
    out.add(*extract_features(tr, tau), tr.labels[tau]);
    if (taus) taus->push_back(tau);
  }
}

namespace {

struct Block {
  Dataset data;
  std::vector<int> taus;
  std::vector<long> reps;
};

// Fills blocks[k] with repetitions [first + k*per, ...) using `jobs` threads.
void generate_block(const PairRolloutConfig& config, long first, long count,
                    Block& block) {
  const int jobs = std::max(1, config.jobs);
  std::vector<Block> parts(jobs);
  auto work = [&](int w) {
    for (long r = first + w; r < first + count; r += jobs) {
      Block& b = parts[w];
      const std::size_t before = b.taus.size();
      repetition_samples(config, r, b.data, &b.taus);
      b.reps.insert(b.reps.end(), b.taus.size() - before, r);
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  // Merge back into repetition order.
  std::vector<std::size_t> cursor(jobs, 0);
  block = Block{};
  for (long r = first; r < first + count; ++r) {
    Block& src = parts[(r - first) % jobs];
    std::size_t& c = cursor[(r - first) % jobs];
    while (c < src.reps.size() && src.reps[c] == r) {
      block.data.features.insert(block.data.features.end(),
                                 src.data.row(c), src.data.row(c) + kPairFeatures);
      block.data.labels.push_back(src.data.labels[c]);
      block.taus.push_back(src.taus[c]);
      block.reps.push_back(r);
      ++c;
    }
  }
}

void append_number(std::string& out, double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset generate_samples(const PairRolloutConfig& config) {
  config.validate();
  Block b;
  generate_block(config, 0, config.repetitions, b);
  return std::move(b.data);
}

DatasetSummary generate_dataset(const PairRolloutConfig& config,
                                const std::string& path,
                                const std::string& manifest_hash) {
  config.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write dataset '" + path + "'");
  DatasetSummary summary;
  constexpr long kBlock = 4096;
  out << nlohmann::json{{"format", "contmgr-pairs"},
                        {"version", 1},
                        {"manifest", manifest_hash},
                        {"features", kPairFeatures}}
             .dump()
      << '\n';
  std::string line;
  for (long first = 0; first < config.repetitions; first += kBlock) {
    Block b;
    generate_block(config, first, std::min(kBlock, config.repetitions - first), b);
    for (std::size_t k = 0; k < b.data.size(); ++k) {
      line.clear();
      line += "{\"f\":[";
      const double* f = b.data.row(k);
      for (int c = 0; c < kPairFeatures; ++c) {
        if (c) line += ',';
        append_number(line, f[c]);
      }
      line += "],\"y\":";
      line += b.data.labels[k] ? '1' : '0';
      line += ",\"rep\":" + std::to_string(b.reps[k]);
      line += ",\"tau\":" + std::to_string(b.taus[k]) + "}\n";
      out << line;
      ++summary.n_samples;
      summary.n_positive += b.data.labels[k];
    }
  }
  if (!out) fail(ErrorCode::kIo, "write failed for dataset '" + path + "'");
  summary.positive_rate =
      summary.n_samples ? static_cast<double>(summary.n_positive) / summary.n_samples : 0.0;

  nlohmann::json side = {{"format", "contmgr-dataset-summary"},
                         {"version", 1},
                         {"manifest", manifest_hash},
                         {"n_samples", summary.n_samples},
                         {"n_positive", summary.n_positive},
                         {"positive_rate", summary.positive_rate},
                         {"repetitions", config.repetitions},
                         {"horizon", config.horizon},
                         {"seed", config.seed}};
  std::ofstream sc(path + ".summary.json");
  if (!sc) fail(ErrorCode::kIo, "cannot write dataset summary for '" + path + "'");
  sc << side.dump(2) << "\n";
  return summary;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingArtifact, "cannot read dataset '" + path + "'");
  Dataset d;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (lineno == 1 && j.contains("format")) {
        if (j.at("format") != "contmgr-pairs" || j.value("version", 0) != 1)
          fail(ErrorCode::kFormat, "dataset '" + path + "': unsupported header");
        continue;
      }
      const auto& f = j.at("f");
      if (!f.is_array() || f.size() != kPairFeatures)
        fail(ErrorCode::kFormat, "dataset line " + std::to_string(lineno) +
                                     ": expected " + std::to_string(kPairFeatures) +
                                     " features");
      PairFeatures row;
      for (int c = 0; c < kPairFeatures; ++c) row[c] = f[c].get<double>();
      const int y = j.at("y").get<int>();
      if (y != 0 && y != 1)
        fail(ErrorCode::kFormat, "dataset line " + std::to_string(lineno) + ": label not 0/1");
      d.add(row, static_cast<std::uint8_t>(y));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

}  // namespace contmgr
