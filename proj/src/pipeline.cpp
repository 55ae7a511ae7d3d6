#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "error.hpp"

namespace contmgr {

using nlohmann::json;
namespace fs = std::filesystem;

CurriculumSchedule PipelineConfig::schedule() const {
  CurriculumSchedule s = CurriculumSchedule::from_total(total_steps);
  if (phase_budgets) s.phase_budgets = *phase_budgets;
  s.phase2_freeze_fraction = phase2_freeze_fraction;
  s.phase3_kl_limit = phase3_kl_limit;
  return s;
}

namespace {

json ppo_json(const PPOConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},
          {"learning_rate", c.learning_rate},
          {"epochs_per_update", c.epochs_per_update},
          {"minibatch_size", c.minibatch_size},
          {"rollout_steps", c.rollout_steps},
          {"kl_limit", c.kl_limit},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"hidden", c.hidden},
          {"exploring_starts", c.exploring_starts},
          {"initial_noop_probability", c.initial_noop_probability}};
}

void read_ppo(const json& j, PPOConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs_per_update = j.value("epochs_per_update", c.epochs_per_update);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.rollout_steps = j.value("rollout_steps", c.rollout_steps);
  c.kl_limit = j.value("kl_limit", c.kl_limit);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.hidden = j.value("hidden", c.hidden);
  c.exploring_starts = j.value("exploring_starts", c.exploring_starts);
  c.initial_noop_probability = j.value("initial_noop_probability", c.initial_noop_probability);
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range read_range(const json& j, const char* key, Range def) {
  if (!j.contains(key)) return def;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) fail(ErrorCode::kFormat, std::string("config: ") + key + " must be [lo, hi]");
  return {v[0], v[1]};
}

}  // namespace

json PipelineConfig::to_json() const {
  json j;
  j["format"] = "contmgr-config";
  j["version"] = 1;
  j["seed"] = seed;
  j["facility"] = json::parse(facility_to_json(facility));
  j["ppo"] = ppo_json(ppo);
  const CurriculumSchedule s = schedule();
  j["train"] = {{"total_steps", total_steps},
                {"phase_budgets", s.phase_budgets},
                {"phase2_freeze_fraction", phase2_freeze_fraction},
                {"phase3_kl_limit", phase3_kl_limit}};
  j["data"] = {{"mu_range", range_json(data.mu_range)},
               {"sigma_range", range_json(data.sigma_range)},
               {"peak_low_range", range_json(data.peak_low_range)},
               {"peak_high_range", range_json(data.peak_high_range)},
               {"horizon", data.horizon},
               {"repetitions", data.repetitions},
               {"proximity_margin", data.proximity_margin},
               {"busy_slope", data.pu_model.busy_slope},
               {"busy_offset", data.pu_model.busy_offset},
               {"background_rate", data.pu_model.background_rate}};
  j["cm"] = {{"n_trees", cm.n_trees},
             {"max_depth", cm.max_depth},
             {"learning_rate", cm.learning_rate},
             {"min_samples_leaf", cm.min_samples_leaf},
             {"positive_class_weight", cm.positive_class_weight},
             {"validation_fraction", cm.validation_fraction},
             {"l2_regularization", cm.l2_regularization}};
  j["override"] = {{"theta", override_cfg.theta},
                   {"delta", override_cfg.delta},
                   {"require_pu_free", override_cfg.require_pu_free}};
  j["eval"] = {{"seeds", n_seeds}, {"rollouts", n_rollouts}, {"theta_grid", theta_grid}};
  return j;
}

PipelineConfig default_pipeline_config() { return PipelineConfig{}; }

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  try {
    if (!j.is_object()) fail(ErrorCode::kFormat, "config: top level must be an object");
    c.seed = j.value("seed", c.seed);
    if (j.contains("facility")) {
      const json& f = j.at("facility");
      if (f.contains("containers") && f.at("containers").is_number_integer())
        c.facility = default_facility(f.at("containers").get<int>());
      else
        c.facility = facility_from_json(f.dump());
    }
    if (j.contains("ppo")) read_ppo(j.at("ppo"), c.ppo);
    if (j.contains("train")) {
      const json& t = j.at("train");
      c.total_steps = t.value("total_steps", c.total_steps);
      if (t.contains("phase_budgets"))
        c.phase_budgets = t.at("phase_budgets").get<std::array<long, 3>>();
      c.phase2_freeze_fraction = t.value("phase2_freeze_fraction", c.phase2_freeze_fraction);
      c.phase3_kl_limit = t.value("phase3_kl_limit", c.phase3_kl_limit);
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      c.data.mu_range = read_range(d, "mu_range", c.data.mu_range);
      c.data.sigma_range = read_range(d, "sigma_range", c.data.sigma_range);
      c.data.peak_low_range = read_range(d, "peak_low_range", c.data.peak_low_range);
      c.data.peak_high_range = read_range(d, "peak_high_range", c.data.peak_high_range);
      c.data.horizon = d.value("horizon", c.data.horizon);
      c.data.repetitions = d.value("repetitions", c.data.repetitions);
      c.data.proximity_margin = d.value("proximity_margin", c.data.proximity_margin);
      c.data.pu_model.busy_slope = d.value("busy_slope", c.data.pu_model.busy_slope);
      c.data.pu_model.busy_offset = d.value("busy_offset", c.data.pu_model.busy_offset);
      c.data.pu_model.background_rate =
          d.value("background_rate", c.data.pu_model.background_rate);
    }
    if (j.contains("cm")) {
      const json& m = j.at("cm");
      c.cm.n_trees = m.value("n_trees", c.cm.n_trees);
      c.cm.max_depth = m.value("max_depth", c.cm.max_depth);
      c.cm.learning_rate = m.value("learning_rate", c.cm.learning_rate);
      c.cm.min_samples_leaf = m.value("min_samples_leaf", c.cm.min_samples_leaf);
      c.cm.positive_class_weight =
          m.value("positive_class_weight", c.cm.positive_class_weight);
      c.cm.validation_fraction = m.value("validation_fraction", c.cm.validation_fraction);
      c.cm.l2_regularization = m.value("l2_regularization", c.cm.l2_regularization);
    }
    if (j.contains("override")) {
      const json& o = j.at("override");
      c.override_cfg.theta = o.value("theta", c.override_cfg.theta);
      c.override_cfg.delta = o.value("delta", c.override_cfg.delta);
      c.override_cfg.require_pu_free =
          o.value("require_pu_free", c.override_cfg.require_pu_free);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      c.n_seeds = e.value("seeds", c.n_seeds);
      c.n_rollouts = e.value("rollouts", c.n_rollouts);
      c.theta_grid = e.value("theta_grid", c.theta_grid);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("config: ") + e.what());
  }
  c.facility.validate();
  c.ppo.validate();
  c.data.validate();
  c.cm.validate();
  c.override_cfg.validate();
  c.schedule().validate(c.ppo);
  require(c.n_seeds >= 1 && c.n_rollouts >= 1, "config: seeds and rollouts must be >= 1");
  return c;
}

namespace {

std::string read_text(const std::string& path, ErrorCode missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(missing, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) fail(ErrorCode::kIo, "cannot create directory '" + p.parent_path().string() + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
  if (path.empty()) return default_pipeline_config();
  const std::string text = read_text(path, ErrorCode::kIo);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "config '" + path + "': " + e.what());
  }
  return pipeline_config_from_json(j);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json RunManifest::to_json(bool with_timestamps) const {
  json j;
  j["format"] = "contmgr-manifest";
  j["version"] = 1;
  j["command"] = command;
  j["config_path"] = config_path;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["phase_budgets"] = phase_budgets;
  j["theta"] = theta ? json(*theta) : json(nullptr);
  j["delta"] = delta;
  j["output"] = output;
  j["tool_version"] = tool_version;
  j["extra"] = extra;
  if (with_timestamps) {
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["hash"] = hash();
  }
  return j;
}

std::string RunManifest::hash() const { return fnv1a_hex(to_json(false).dump()); }

std::string default_output_dir() {
  const char* env = std::getenv("CONTMGR_OUT_DIR");
  return env && *env ? env : "out";
}

namespace {

struct Context {
  PipelineConfig config;
  RunManifest manifest;
};

Context make_context(const std::string& command, const CommonOptions& common) {
  require(common.jobs >= 1, "--jobs must be >= 1");
  Context ctx;
  ctx.config = load_pipeline_config(common.config_path);
  if (common.containers > 0) {
    require(common.containers >= 2, "--containers must be >= 2");
    ctx.config.facility = default_facility(common.containers);
  }
  if (common.seed) ctx.config.seed = *common.seed;
  ctx.manifest.command = command;
  ctx.manifest.config_path = common.config_path;
  ctx.manifest.config_hash = fnv1a_hex(ctx.config.to_json().dump());
  ctx.manifest.phase_budgets = ctx.config.schedule().phase_budgets;
  ctx.manifest.delta = ctx.config.override_cfg.delta;
  ctx.manifest.started_at = now_utc();
  return ctx;
}

void write_manifest(RunManifest& m, const std::string& dir) {
  m.finished_at = now_utc();
  write_text((fs::path(dir) / ("manifest_" + m.command + ".json")).string(),
             m.to_json(true).dump(2) + "\n");
}

std::string dir_of(const std::string& path) {
  const fs::path p(path);
  return p.has_parent_path() ? p.parent_path().string() : ".";
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string policy_file(const std::string& dir, const std::string& mode, int seed) {
  return path_in(dir, mode + "_seed" + std::to_string(seed) + ".json");
}

}  // namespace

int scripted_action(const FacilityState& state, const FacilityConfig& config) {
  if (state.pu_counter > 0) return 0;
  int best = 0;
  double best_over = 0.0;
  for (int i = 0; i < config.size(); ++i) {
    const double over = state.volumes[i] - config.containers[i].peak_high;
    if (over >= 0.0 && (best == 0 || over > best_over)) {
      best = i + 1;
      best_over = over;
    }
  }
  return best;
}

CommandResult cmd_simulate(const SimulateOptions& options) {
  Context ctx = make_context("simulate", options.common);
  const FacilityConfig& facility = ctx.config.facility;
  const std::string out =
      options.out_path.empty() ? path_in(default_output_dir(), "trajectory.jsonl")
                               : options.out_path;
  ctx.manifest.output = out;
  ctx.manifest.extra["policy"] = options.policy;
  ctx.manifest.seeds = {static_cast<int>(ctx.config.seed)};

  std::optional<PolicyParams> policy;
  if (options.policy != "random" && options.policy != "scripted") {
    policy = load_policy(options.policy);
    require(policy->num_actions() == facility.size() + 1,
            "simulate: policy does not match the facility size");
  }
  const std::string hash = ctx.manifest.hash();
  Rng rng(derive_seed(ctx.config.seed, 7));
  DecideFn fn;
  if (options.policy == "random") {
    fn = [&](const FacilityState&, std::span<const double>) {
      return static_cast<int>(rng.below(facility.size() + 1));
    };
  } else if (options.policy == "scripted") {
    fn = [&](const FacilityState& s, std::span<const double>) {
      return scripted_action(s, facility);
    };
  } else {
    fn = [&](const FacilityState& s, std::span<const double>) {
      return act(*policy, observation(s, facility), rng).action;
    };
  }

  std::ostringstream dump;
  json header = {{"format", "contmgr-trajectory"},
                 {"version", 1},
                 {"manifest", hash},
                 {"facility", facility.name},
                 {"policy", options.policy},
                 {"seed", ctx.config.seed}};
  dump << header.dump() << '\n';
  EpisodeOptions eo;
  eo.dump = &dump;
  const EpisodeMetrics m = run_episode(facility, fn, derive_seed(ctx.config.seed, 3), eo);
  write_text(out, dump.str());
  write_manifest(ctx.manifest, dir_of(out));

  std::ostringstream msg;
  msg << "simulated " << m.steps << " steps, " << m.n_empties << " empties, "
      << m.collision_timesteps << " collision timesteps"
      << (m.terminated_early ? " (overflow)" : "");
  return {{out}, hash, msg.str()};
}

CommandResult cmd_train(const TrainOptions& options) {
  Context ctx = make_context("train", options.common);
  require(options.mode == "curriculum" || options.mode == "naive",
          "train: mode must be 'curriculum' or 'naive'");
  if (options.total_steps > 0) {
    ctx.config.total_steps = options.total_steps;
    ctx.config.phase_budgets.reset();
  }
  std::vector<int> seeds = options.seeds;
  if (seeds.empty())
    for (int k = 0; k < ctx.config.n_seeds; ++k) seeds.push_back(k);
  for (int s : seeds) require(s >= 0, "train: seeds must be non-negative");
  const std::string dir = options.out_dir.empty() ? default_output_dir() : options.out_dir;
  ctx.manifest.seeds = seeds;
  ctx.manifest.output = dir;
  ctx.manifest.extra["mode"] = options.mode;
  ctx.manifest.extra["total_steps"] = ctx.config.total_steps;
  ctx.manifest.phase_budgets = ctx.config.schedule().phase_budgets;
  const std::string hash = ctx.manifest.hash();
  const CurriculumSchedule schedule = ctx.config.schedule();
  schedule.validate(ctx.config.ppo);

  std::vector<std::string> artifacts(2 * seeds.size());
  const int count = static_cast<int>(seeds.size());
  const int jobs = std::max(1, std::min(options.common.jobs, count));
  std::vector<std::exception_ptr> errors(jobs);
  auto work = [&](int w) {
    try {
      for (int k = w; k < count; k += jobs) {
        PPOConfig pc = ctx.config.ppo;
        pc.seed = derive_seed(ctx.config.seed, 0x7A17, static_cast<std::uint64_t>(seeds[k]));
        const TrainResult r =
            options.mode == "curriculum"
                ? train_curriculum(pc, ctx.config.facility, schedule)
                : train_naive(pc, ctx.config.facility, ctx.config.total_steps);
        const std::string weights = policy_file(dir, options.mode, seeds[k]);
        const std::string log = path_in(
            dir, options.mode + "_seed" + std::to_string(seeds[k]) + "_log.csv");
        write_text(weights, policy_to_json(r.params, hash));
        write_text(log, r.log.to_csv(hash));
        artifacts[2 * k] = weights;
        artifacts[2 * k + 1] = log;
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  write_manifest(ctx.manifest, dir);
  return {artifacts, hash,
          "trained " + std::to_string(count) + " " + options.mode + " policies in " + dir};
}

CommandResult cmd_gen_data(const GenDataOptions& options) {
  Context ctx = make_context("gen-data", options.common);
  PairRolloutConfig dc = ctx.config.data;
  if (options.repetitions > 0) dc.repetitions = options.repetitions;
  if (options.horizon > 0) dc.horizon = options.horizon;
  dc.seed = derive_seed(ctx.config.seed, 0xDA7A);
  dc.jobs = options.common.jobs;
  dc.validate();
  const std::string out = options.out_path.empty()
                              ? path_in(default_output_dir(), "pairs.jsonl")
                              : options.out_path;
  ctx.manifest.output = out;
  ctx.manifest.seeds = {static_cast<int>(ctx.config.seed)};
  ctx.manifest.extra["repetitions"] = dc.repetitions;
  ctx.manifest.extra["horizon"] = dc.horizon;
  const std::string hash = ctx.manifest.hash();
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const DatasetSummary s = generate_dataset(dc, out, hash);
  write_manifest(ctx.manifest, dir_of(out));
  std::ostringstream msg;
  msg << "wrote " << s.n_samples << " samples (" << s.n_positive << " positive, rate "
      << s.positive_rate << ") to " << out;
  return {{out, out + ".summary.json"}, hash, msg.str()};
}

CommandResult cmd_train_cm(const TrainCmOptions& options) {
  Context ctx = make_context("train-cm", options.common);
  require(!options.dataset_path.empty(), "train-cm: --data is required");
  if (!fs::exists(options.dataset_path))
    fail(ErrorCode::kMissingArtifact, "dataset not found: '" + options.dataset_path + "'");
  const std::string out = options.out_path.empty()
                              ? path_in(default_output_dir(), "collision_model.json")
                              : options.out_path;
  ctx.manifest.output = out;
  ctx.manifest.seeds = {static_cast<int>(ctx.config.seed)};
  ctx.manifest.extra["dataset"] = options.dataset_path;
  ctx.manifest.extra["dataset_hash"] =
      fnv1a_hex(read_text(options.dataset_path, ErrorCode::kMissingArtifact));
  const std::string hash = ctx.manifest.hash();

  const Dataset data = load_dataset(options.dataset_path);
  CMTrainConfig cc = ctx.config.cm;
  cc.seed = derive_seed(ctx.config.seed, 0xC0);
  const TrainedModel tm = train_cm(data, cc);
  write_text(out, cm_to_json(tm.model, hash));
  json rep = {{"format", "contmgr-cm-report"},
              {"version", 1},
              {"manifest", hash},
              {"auc", tm.report.holdout.auc},
              {"logloss", tm.report.holdout.logloss},
              {"precision_at_recall", tm.report.holdout.precision_at_recall},
              {"target_recall", tm.report.holdout.target_recall},
              {"positive_rate", tm.report.positive_rate},
              {"positive_weight", tm.report.positive_weight},
              {"n_train", tm.report.n_train},
              {"n_holdout", tm.report.n_holdout},
              {"train_loss", tm.report.train_loss}};
  write_text(out + ".report.json", rep.dump(2) + "\n");
  write_manifest(ctx.manifest, dir_of(out));
  std::ostringstream msg;
  msg << "trained " << tm.model.trees.size() << " trees, holdout AUC "
      << tm.report.holdout.auc << ", precision@recall>=0.9 "
      << tm.report.holdout.precision_at_recall;
  return {{out, out + ".report.json"}, hash, msg.str()};
}

namespace {

struct EvalInputs {
  Context ctx;
  Method method = Method::kCurriculum;
  std::vector<PolicyParams> policies;
  std::optional<BoostedEnsemble> model;
  EvalSettings settings;
  std::string out_dir;
  std::vector<double> grid;
};

EvalInputs prepare_eval(const std::string& command, const EvaluateOptions& options,
                        bool need_model) {
  EvalInputs in;
  in.ctx = make_context(command, options.common);
  auto& cfg = in.ctx.config;
  const auto m = parse_method(options.method);
  require(m.has_value(), "unknown method '" + options.method + "' (naive | cl | cl_cm)");
  in.method = *m;
  if (options.n_seeds > 0) cfg.n_seeds = options.n_seeds;
  if (options.n_rollouts > 0) cfg.n_rollouts = options.n_rollouts;
  if (options.delta) cfg.override_cfg.delta = *options.delta;
  if (options.require_pu_free) cfg.override_cfg.require_pu_free = *options.require_pu_free;
  if (options.theta) cfg.override_cfg.theta = *options.theta;
  if (!options.theta_grid.empty()) cfg.theta_grid = options.theta_grid;
  cfg.override_cfg.validate();
  for (double t : cfg.theta_grid)
    require(t >= 0.0 && t <= 1.0, "theta grid values must lie in [0, 1]");

  in.out_dir = options.out_dir.empty() ? default_output_dir() : options.out_dir;
  const std::string wdir = options.weights_dir.empty() ? in.out_dir : options.weights_dir;
  const std::string mode = in.method == Method::kNaive ? "naive" : "curriculum";
  for (int k = 0; k < cfg.n_seeds; ++k) {
    const std::string path = policy_file(wdir, mode, k);
    if (!fs::exists(path))
      fail(ErrorCode::kMissingArtifact,
           "missing weights for seed " + std::to_string(k) + ": '" + path + "'");
    in.policies.push_back(load_policy(path));
    in.ctx.manifest.seeds.push_back(k);
    in.ctx.manifest.extra["weights"][std::to_string(k)] =
        fnv1a_hex(read_text(path, ErrorCode::kMissingArtifact));
  }
  if (need_model) {
    const std::string mp =
        options.model_path.empty() ? path_in(wdir, "collision_model.json") : options.model_path;
    if (!fs::exists(mp))
      fail(ErrorCode::kMissingArtifact, "missing collision model: '" + mp + "'");
    in.model = load_cm(mp);
    in.ctx.manifest.extra["model"] = fnv1a_hex(read_text(mp, ErrorCode::kMissingArtifact));
  }
  in.settings.n_rollouts = cfg.n_rollouts;
  in.settings.base_seed = derive_seed(cfg.seed, 0xE7A1);
  in.settings.jobs = options.common.jobs;
  in.grid = cfg.theta_grid;
  in.ctx.manifest.output = in.out_dir;
  in.ctx.manifest.delta = cfg.override_cfg.delta;
  in.ctx.manifest.extra["method"] = method_name(in.method);
  in.ctx.manifest.extra["rollouts"] = cfg.n_rollouts;
  in.ctx.manifest.extra["require_pu_free"] = cfg.override_cfg.require_pu_free;
  in.ctx.manifest.extra["theta_grid"] = cfg.theta_grid;
  return in;
}

std::string tag(const EvalInputs& in) {
  return std::string(method_name(in.method)) + "_" + in.ctx.config.facility.name;
}

}  // namespace

CommandResult cmd_evaluate(const EvaluateOptions& options) {
  const bool with_cm = options.method == "cl_cm";
  EvalInputs in = prepare_eval("evaluate", options, with_cm);
  auto& cfg = in.ctx.config;
  if (with_cm) {
    if (options.theta) in.ctx.manifest.theta = *options.theta;
    else in.ctx.manifest.extra["theta_selection"] = "sweep";
  }
  const std::string hash = in.ctx.manifest.hash();
  CommandResult res;
  res.manifest_hash = hash;

  std::optional<OverrideConfig> oc;
  if (with_cm) {
    oc = cfg.override_cfg;
    if (!options.theta) {
      const SweepResult sw = threshold_sweep(cfg.facility, in.policies, *in.model,
                                             cfg.override_cfg, in.grid, in.settings);
      oc->theta = sw.best_theta;
      const std::string p = path_in(in.out_dir, "sweep_" + tag(in) + ".csv");
      write_text(p, sweep_csv(sw, hash));
      res.artifacts.push_back(p);
    }
  }
  const AggregateReport rep = evaluate_method(in.method, cfg.facility, in.policies,
                                              with_cm ? &*in.model : nullptr, oc,
                                              in.settings);
  const std::string csv = path_in(in.out_dir, "eval_" + tag(in) + ".csv");
  const std::string summary = path_in(in.out_dir, "eval_" + tag(in) + "_summary.json");
  const std::string plot = path_in(in.out_dir, "plot_" + tag(in) + ".csv");
  write_text(csv, report_csv(rep, hash));
  write_text(summary, report_summary_json(rep, hash));
  write_text(plot, plot_csv(rep, hash));
  res.artifacts.insert(res.artifacts.end(), {csv, summary, plot});
  write_manifest(in.ctx.manifest, in.out_dir);

  const SeedSummary& med = rep.seed_summary(rep.median_seed);
  std::ostringstream msg;
  msg << method_name(in.method) << " on " << cfg.facility.name;
  if (with_cm) msg << " (theta " << rep.theta << ")";
  msg << ": best seed " << rep.best_seed << ", median seed " << rep.median_seed
      << ", median-seed collisions " << med.collisions.mean << ", volume "
      << med.volume_processed.mean;
  res.message = msg.str();
  return res;
}

CommandResult cmd_sweep(const EvaluateOptions& options) {
  EvaluateOptions o = options;
  o.method = "cl_cm";
  EvalInputs in = prepare_eval("sweep", o, true);
  const std::string hash = in.ctx.manifest.hash();
  const SweepResult sw = threshold_sweep(in.ctx.config.facility, in.policies, *in.model,
                                         in.ctx.config.override_cfg, in.grid, in.settings);
  const std::string p = path_in(in.out_dir, "sweep_" + tag(in) + ".csv");
  write_text(p, sweep_csv(sw, hash));
  write_manifest(in.ctx.manifest, in.out_dir);
  std::ostringstream msg;
  msg << "swept " << sw.rows.size() << " thresholds; lowest CV% at theta " << sw.best_theta;
  return {{p}, hash, msg.str()};
}

}  // namespace contmgr
