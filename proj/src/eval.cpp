#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "error.hpp"

namespace contmgr {

EpisodeMetrics run_episode(const FacilityConfig& facility, const DecideFn& decide_fn,
                           std::uint64_t seed, const EpisodeOptions& options) {
  Environment env(facility, facility.reward_params(options.reward_phase), seed);
  env.reset(seed);
  const int n = facility.size();
  EpisodeMetrics m;
  std::vector<int> per_container(n, 0);
  int non_noop = 0;
  double deviation_sum = 0.0;

  while (!env.done()) {
    const FacilityState& s = env.state();
    const bool pu_free = s.pu_counter == 0;
    const int action = decide_fn(s, env.previous_volumes());
    const StepOutcome out = env.step(action);
    if (options.dump) *options.dump << trajectory_record(out, action) << '\n';

    ++m.steps;
    m.total_reward += out.reward;
    if (action != 0) ++non_noop;
    if (out.info.invalid_action) ++m.n_invalid;
    if (out.info.emptied_container) {
      const int id = *out.info.emptied_container;
      const double v = *out.info.emptied_volume;
      const auto& c = facility.container(id);
      ++m.n_empties;
      ++per_container[id - 1];
      m.total_volume_processed += v;
      if (std::abs(v - c.peak_high) <= std::abs(v - c.peak_low)) ++m.n_high;
      else ++m.n_low;
      if (v > c.peak_high + options.safety_margin) m.safety_violations_pct += 1.0;
    } else if (pu_free) {
      ++m.press_idle_time;
    }
    if (out.info.collision_now) ++m.collision_timesteps;
    for (int i = 0; i < n; ++i) {
      const auto& c = facility.containers[i];
      const double v = out.next_state.volumes[i];
      deviation_sum += std::min(std::abs(v - c.peak_low), std::abs(v - c.peak_high));
    }
    if (out.info.overflowed_container) m.terminated_early = true;
  }

  m.total_volume_deviation =
      m.steps ? 100.0 * deviation_sum / (static_cast<double>(m.steps) * n) /
                    facility.overflow_limit
              : 0.0;
  std::vector<double> counts(per_container.begin(), per_container.end());
  const SeriesStats apc = series_stats(counts);
  m.actions_per_container_mean = apc.mean;
  m.actions_per_container_std = apc.std;
  m.reward_per_action = non_noop ? m.total_reward / non_noop : 0.0;
  m.higher_lower_peak_ratio = static_cast<double>(m.n_high) / std::max(m.n_low, 1);
  m.safety_violations_pct =
      m.n_empties ? 100.0 * m.safety_violations_pct / m.n_empties : 0.0;
  if (options.overrides) m.n_overrides = *options.overrides;
  return m;
}

SeriesStats series_stats(std::span<const double> xs) {
  SeriesStats s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (xs.size() - 1));
  }
  s.cv_pct = s.std == 0.0 ? 0.0 : 100.0 * s.std / s.mean;
  return s;
}

double cv_percent(std::span<const double> xs) { return series_stats(xs).cv_pct; }

const char* method_name(Method m) {
  switch (m) {
    case Method::kNaive: return "naive";
    case Method::kCurriculum: return "cl";
    case Method::kCurriculumCm: return "cl_cm";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& s) {
  if (s == "naive") return Method::kNaive;
  if (s == "cl") return Method::kCurriculum;
  if (s == "cl_cm") return Method::kCurriculumCm;
  return std::nullopt;
}

SeriesStats AggregateReport::metric(
    const std::function<double(const EpisodeMetrics&)>& f) const {
  std::vector<double> xs;
  for (const auto& r : rows) xs.push_back(f(r.metrics));
  return series_stats(xs);
}

double AggregateReport::pooled_peak_ratio() const {
  long hi = 0, lo = 0;
  for (const auto& r : rows) {
    hi += r.metrics.n_high;
    lo += r.metrics.n_low;
  }
  return static_cast<double>(hi) / std::max<long>(lo, 1);
}

const SeedSummary& AggregateReport::seed_summary(int seed) const {
  for (const auto& s : seeds)
    if (s.seed == seed) return s;
  fail(ErrorCode::kInvalidArgument, "report: unknown seed " + std::to_string(seed));
}

std::pair<int, int> select_best_and_median(const std::vector<SeedSummary>& seeds) {
  require(!seeds.empty(), "seed selection: no seeds");
  std::vector<std::size_t> order(seeds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return seeds[a].collisions.mean < seeds[b].collisions.mean;
  });
  const int best = seeds[order[0]].seed;
  if (seeds.size() == 1) return {best, best};
  const std::size_t rest = order.size() - 1;
  const int median = seeds[order[1 + (rest - 1) / 2]].seed;
  return {best, median};
}

namespace {

// Runs `count` independent tasks over `jobs` threads; results land by index.
template <typename F>
void parallel_for(int count, int jobs, F&& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int k = w; k < count; k += jobs) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t env_seed(std::uint64_t base, int seed, int rollout) {
  return derive_seed(base, 0xE0 + static_cast<std::uint64_t>(seed),
                     static_cast<std::uint64_t>(rollout));
}

std::uint64_t policy_seed(std::uint64_t base, int seed, int rollout) {
  return derive_seed(base, 0xA0 + static_cast<std::uint64_t>(seed) * 7919,
                     static_cast<std::uint64_t>(rollout));
}

EpisodeMetrics run_policy_episode(const FacilityConfig& facility,
                                  const PolicyParams& policy,
                                  const BoostedEnsemble* model,
                                  const OverrideConfig* override_cfg,
                                  std::uint64_t base, int seed, int rollout,
                                  const EpisodeOptions& options) {
  Rng rng(policy_seed(base, seed, rollout));
  int overrides = 0;
  DecideFn fn;
  if (model && override_cfg) {
    fn = [&](const FacilityState& s, std::span<const double> prev) {
      const Decision d = decide(s, prev, policy, facility, *model, *override_cfg, rng);
      overrides += d.overridden;
      return d.action;
    };
  } else {
    fn = [&](const FacilityState& s, std::span<const double>) {
      return act(policy, observation(s, facility), rng).action;
    };
  }
  EpisodeOptions opts = options;
  opts.overrides = &overrides;
  return run_episode(facility, fn, env_seed(base, seed, rollout), opts);
}

SeedSummary summarize_seed(int seed, const std::vector<EpisodeRow>& rows) {
  SeedSummary s;
  s.seed = seed;
  std::vector<double> col, dev, idle, vol, safe, rpa, apc;
  long hi = 0, lo = 0;
  for (const auto& r : rows) {
    if (r.seed != seed) continue;
    const auto& m = r.metrics;
    col.push_back(m.collision_timesteps);
    dev.push_back(m.total_volume_deviation);
    idle.push_back(m.press_idle_time);
    vol.push_back(m.total_volume_processed);
    safe.push_back(m.safety_violations_pct);
    rpa.push_back(m.reward_per_action);
    apc.push_back(m.actions_per_container_mean);
    hi += m.n_high;
    lo += m.n_low;
  }
  s.collisions = series_stats(col);
  s.volume_deviation = series_stats(dev);
  s.idle_time = series_stats(idle);
  s.volume_processed = series_stats(vol);
  s.safety_pct = series_stats(safe);
  s.reward_per_action = series_stats(rpa).mean;
  s.actions_per_container = series_stats(apc);
  s.peak_ratio = static_cast<double>(hi) / std::max<long>(lo, 1);
  return s;
}

}  // namespace

AggregateReport evaluate_method(Method method, const FacilityConfig& facility,
                                const std::vector<PolicyParams>& policies,
                                const BoostedEnsemble* model,
                                const std::optional<OverrideConfig>& override_cfg,
                                const EvalSettings& settings) {
  require(!policies.empty(), "evaluate: at least one seed required");
  require(settings.n_rollouts >= 1, "evaluate: n_rollouts must be >= 1");
  const bool with_cm = method == Method::kCurriculumCm;
  if (with_cm) {
    require(model != nullptr, "evaluate: cl_cm requires a collision model");
    require(override_cfg.has_value(), "evaluate: cl_cm requires override settings");
    override_cfg->validate();
  }
  for (std::size_t k = 0; k < policies.size(); ++k)
    require(policies[k].num_actions() == facility.size() + 1 &&
                policies[k].observation_size() == observation_size(facility.size()),
            "evaluate: policy for seed " + std::to_string(k) +
                " does not match the facility size");

  AggregateReport rep;
  rep.method = method;
  rep.facility = facility.name;
  rep.theta = with_cm ? override_cfg->theta : 1.0;
  const int n_seeds = static_cast<int>(policies.size());
  const int total = n_seeds * settings.n_rollouts;
  rep.rows.resize(total);
  parallel_for(total, settings.jobs, [&](int k) {
    const int seed = k / settings.n_rollouts, rollout = k % settings.n_rollouts;
    EpisodeOptions opts = settings.episode;
    opts.dump = nullptr;
    rep.rows[k] = {seed, rollout,
                   run_policy_episode(facility, policies[seed],
                                      with_cm ? model : nullptr,
                                      with_cm ? &*override_cfg : nullptr,
                                      settings.base_seed, seed, rollout, opts)};
  });
  for (int s = 0; s < n_seeds; ++s) rep.seeds.push_back(summarize_seed(s, rep.rows));
  std::tie(rep.best_seed, rep.median_seed) = select_best_and_median(rep.seeds);
  return rep;
}

SweepResult threshold_sweep(const FacilityConfig& facility,
                            const std::vector<PolicyParams>& policies,
                            const BoostedEnsemble& model, const OverrideConfig& base,
                            std::vector<double> grid, const EvalSettings& settings) {
  require(!grid.empty(), "sweep: theta grid must be non-empty");
  std::sort(grid.begin(), grid.end());
  SweepResult res;
  for (double theta : grid) {
    OverrideConfig oc = base;
    oc.theta = theta;
    const AggregateReport rep = evaluate_method(Method::kCurriculumCm, facility,
                                                policies, &model, oc, settings);
    const SeriesStats st = rep.metric(
        [](const EpisodeMetrics& m) { return static_cast<double>(m.collision_timesteps); });
    res.rows.push_back({theta, st});
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < res.rows.size(); ++k)
    if (res.rows[k].collisions.cv_pct < res.rows[best].collisions.cv_pct) best = k;
  res.best_theta = res.rows[best].theta;
  return res;
}

namespace {

std::string header_line(const std::string& kind, const std::string& manifest_hash) {
  return "# contmgr " + kind + " version=1 manifest=" + manifest_hash + "\n";
}

}  // namespace

std::string report_csv(const AggregateReport& report, const std::string& manifest_hash) {
  std::ostringstream out;
  out.precision(12);
  out << header_line("evaluation", manifest_hash);
  out << "method,facility,theta,seed,rollout,steps,press_idle_time,"
         "total_volume_processed,collision_timesteps,total_volume_deviation_pct,"
         "actions_per_container_mean,actions_per_container_std,reward_per_action,"
         "higher_lower_peak_ratio,n_high,n_low,safety_violations_pct,n_empties,"
         "n_invalid,n_overrides,terminated_early\n";
  for (const auto& r : report.rows) {
    const auto& m = r.metrics;
    out << method_name(report.method) << ',' << report.facility << ','
        << report.theta << ',' << r.seed << ',' << r.rollout << ',' << m.steps
        << ',' << m.press_idle_time << ',' << m.total_volume_processed << ','
        << m.collision_timesteps << ',' << m.total_volume_deviation << ','
        << m.actions_per_container_mean << ',' << m.actions_per_container_std
        << ',' << m.reward_per_action << ',' << m.higher_lower_peak_ratio << ','
        << m.n_high << ',' << m.n_low << ',' << m.safety_violations_pct << ','
        << m.n_empties << ',' << m.n_invalid << ',' << m.n_overrides << ','
        << (m.terminated_early ? 1 : 0) << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json stats_json(const SeriesStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"cv_pct", s.cv_pct}};
}

nlohmann::json seed_json(const SeedSummary& s) {
  return {{"seed", s.seed},
          {"collisions_ts", stats_json(s.collisions)},
          {"total_volume_deviation_pct", stats_json(s.volume_deviation)},
          {"reward_per_action", s.reward_per_action},
          {"higher_lower_peak_ratio", s.peak_ratio},
          {"actions_per_container", stats_json(s.actions_per_container)},
          {"press_idle_time", stats_json(s.idle_time)},
          {"total_volume_processed", stats_json(s.volume_processed)},
          {"safety_violations_pct", stats_json(s.safety_pct)}};
}

}  // namespace

std::string report_summary_json(const AggregateReport& report,
                                const std::string& manifest_hash) {
  using nlohmann::json;
  json j;
  j["format"] = "contmgr-evaluation-summary";
  j["version"] = 1;
  j["manifest"] = manifest_hash;
  j["method"] = method_name(report.method);
  j["facility"] = report.facility;
  j["theta"] = report.theta;
  j["n_episodes"] = report.rows.size();
  j["best"] = seed_json(report.seed_summary(report.best_seed));
  j["median"] = seed_json(report.seed_summary(report.median_seed));
  auto metric = [&](auto f) { return stats_json(report.metric(f)); };
  j["overall"] = {
      {"collisions_ts", metric([](const EpisodeMetrics& m) { return double(m.collision_timesteps); })},
      {"press_idle_time", metric([](const EpisodeMetrics& m) { return double(m.press_idle_time); })},
      {"total_volume_processed", metric([](const EpisodeMetrics& m) { return m.total_volume_processed; })},
      {"total_volume_deviation_pct", metric([](const EpisodeMetrics& m) { return m.total_volume_deviation; })},
      {"reward_per_action", metric([](const EpisodeMetrics& m) { return m.reward_per_action; })},
      {"safety_violations_pct", metric([](const EpisodeMetrics& m) { return m.safety_violations_pct; })},
      {"actions_per_container", metric([](const EpisodeMetrics& m) { return m.actions_per_container_mean; })},
      {"higher_lower_peak_ratio", report.pooled_peak_ratio()},
      {"terminated_early", metric([](const EpisodeMetrics& m) { return m.terminated_early ? 1.0 : 0.0; })}};
  j["seeds"] = json::array();
  for (const auto& s : report.seeds) j["seeds"].push_back(seed_json(s));
  return j.dump(2) + "\n";
}

std::string sweep_csv(const SweepResult& sweep, const std::string& manifest_hash) {
  std::ostringstream out;
  out.precision(12);
  out << header_line("threshold-sweep", manifest_hash);
  out << "theta,collisions_mean,collisions_std,cv_pct,selected\n";
  for (const auto& r : sweep.rows)
    out << r.theta << ',' << r.collisions.mean << ',' << r.collisions.std << ','
        << r.collisions.cv_pct << ',' << (r.theta == sweep.best_theta ? 1 : 0) << '\n';
  return out.str();
}

std::string plot_csv(const AggregateReport& report, const std::string& manifest_hash) {
  std::ostringstream out;
  out.precision(12);
  out << header_line("plot-data", manifest_hash);
  out << "method,facility,idle_mean,idle_std,volume_mean,volume_std,"
         "safety_pct_mean,safety_pct_std,collisions_mean,collisions_std\n";
  auto st = [&](auto f) { return report.metric(f); };
  const auto idle = st([](const EpisodeMetrics& m) { return double(m.press_idle_time); });
  const auto vol = st([](const EpisodeMetrics& m) { return m.total_volume_processed; });
  const auto saf = st([](const EpisodeMetrics& m) { return m.safety_violations_pct; });
  const auto col = st([](const EpisodeMetrics& m) { return double(m.collision_timesteps); });
  out << method_name(report.method) << ',' << report.facility << ',' << idle.mean
      << ',' << idle.std << ',' << vol.mean << ',' << vol.std << ',' << saf.mean
      << ',' << saf.std << ',' << col.mean << ',' << col.std << '\n';
  return out.str();
}

int recount_collisions(std::istream& dump, const FacilityConfig& facility) {
  int count = 0;
  std::string line;
  while (std::getline(dump, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("t")) continue;  // header record
    FacilityState s;
    s.volumes = j.at("volumes").get<std::vector<double>>();
    s.pu_counter = j.at("pu_counter").get<int>();
    int near = 0;
    for (int i = 0; i < facility.size(); ++i)
      if (s.volumes[i] >= facility.containers[i].peak_high - facility.proximity_margin)
        ++near;
    if (s.pu_counter > 0 && near >= 2) ++count;
  }
  return count;
}

}  // namespace contmgr
