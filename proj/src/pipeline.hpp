#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "boosted_trees.hpp"
#include "collision_data.hpp"
#include "curriculum.hpp"
#include "eval.hpp"
#include "facility.hpp"
#include "override.hpp"
#include "ppo.hpp"

namespace contmgr {

inline constexpr const char* kToolVersion = "0.3.0";

// Everything a command needs, resolved from an optional JSON config file
// plus command-line overrides. Missing sections take library defaults.
struct PipelineConfig {
  FacilityConfig facility = default_facility(7);
  PPOConfig ppo;
  long total_steps = 1'500'000;
  std::optional<std::array<long, 3>> phase_budgets;
  double phase2_freeze_fraction = 0.5;
  double phase3_kl_limit = 0.01;
  PairRolloutConfig data;
  CMTrainConfig cm;
  OverrideConfig override_cfg;
  std::vector<double> theta_grid{0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int n_seeds = 5;
  int n_rollouts = 3;
  std::uint64_t seed = 0;  // master seed

  CurriculumSchedule schedule() const;
  nlohmann::json to_json() const;
};

PipelineConfig default_pipeline_config();
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
// Empty path: defaults. Unreadable file: kIo. Malformed: kFormat.
PipelineConfig load_pipeline_config(const std::string& path);

// Provenance for one command invocation. The hash covers everything except
// the timestamps, so identical invocations share it.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::string config_hash;
  std::vector<int> seeds;
  std::array<long, 3> phase_budgets{};
  std::optional<double> theta;
  double delta = 0.0;
  std::string output;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  nlohmann::json extra = nlohmann::json::object();

  std::string hash() const;
  nlohmann::json to_json(bool with_timestamps = true) const;
};

std::string fnv1a_hex(const std::string& text);
// CONTMGR_OUT_DIR, else "out".
std::string default_output_dir();

struct CommonOptions {
  std::string config_path;
  int containers = 0;  // > 0: replace the facility with the default NbIp
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

struct SimulateOptions {
  CommonOptions common;
  std::string policy = "random";  // random | scripted | <weights path>
  std::string out_path;           // default <out dir>/trajectory.jsonl
};

struct TrainOptions {
  CommonOptions common;
  std::string mode = "curriculum";  // curriculum | naive
  std::vector<int> seeds;           // empty: 0 .. n_seeds-1 from config
  long total_steps = 0;             // 0: from config
  std::string out_dir;
};

struct GenDataOptions {
  CommonOptions common;
  long repetitions = 0;  // 0: from config
  int horizon = 0;
  std::string out_path;  // default <out dir>/pairs.jsonl
};

struct TrainCmOptions {
  CommonOptions common;
  std::string dataset_path;
  std::string out_path;  // default <out dir>/collision_model.json
};

struct EvaluateOptions {
  CommonOptions common;
  std::string method = "cl";    // naive | cl | cl_cm
  std::string weights_dir;      // default: out dir
  std::string model_path;       // default <weights dir>/collision_model.json
  int n_seeds = 0;              // 0: from config
  int n_rollouts = 0;
  std::optional<double> theta;  // cl_cm without theta runs the sweep first
  std::optional<double> delta;
  std::optional<bool> require_pu_free;
  std::vector<double> theta_grid;
  std::string out_dir;
};

struct CommandResult {
  std::vector<std::string> artifacts;
  std::string manifest_hash;
  std::string message;
};

CommandResult cmd_simulate(const SimulateOptions& options);
CommandResult cmd_train(const TrainOptions& options);
CommandResult cmd_gen_data(const GenDataOptions& options);
CommandResult cmd_train_cm(const TrainCmOptions& options);
CommandResult cmd_evaluate(const EvaluateOptions& options);
// Uses the cl_cm inputs of EvaluateOptions; writes one CSV row per theta.
CommandResult cmd_sweep(const EvaluateOptions& options);

// Greedy baseline: empties the most overdue container once it reaches its
// higher peak and the PU is free.
int scripted_action(const FacilityState& state, const FacilityConfig& config);

}  // namespace contmgr
