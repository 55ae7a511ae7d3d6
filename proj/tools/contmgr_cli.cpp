// contmgr: command-line front end over the C API.
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "contmgr/contmgr.h"

namespace {

struct Common {
  std::string config;
  int containers = 0;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--containers", containers, "Use the default facility with N containers")
        ->check(CLI::Range(2, 64));
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  cm_common_options to_c() const {
    cm_common_options c{};
    c.config_path = config.c_str();
    c.containers = containers;
    c.has_seed = seed.has_value();
    c.seed = seed.value_or(0);
    c.jobs = jobs;
    return c;
  }
};

int report(cm_status status, const char* message) {
  if (status == CM_OK) {
    if (message && *message) std::printf("%s\n", message);
    return 0;
  }
  std::fprintf(stderr, "contmgr: %s: %s\n", cm_status_name(status), cm_last_error());
  // Anything caused by the caller's inputs is a usage error.
  return status == CM_ERR_INTERNAL || status == CM_ERR_NUMERIC ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Container facility scheduling: simulation, training and evaluation"};
  app.set_version_flag("--version", std::string(cm_version()));
  app.require_subcommand(1);

  Common sim_c, train_c, gen_c, tcm_c, eval_c, sweep_c;

  auto* sim = app.add_subcommand("simulate", "Run one episode and write a JSONL trajectory");
  sim_c.add(sim);
  std::string sim_policy = "random", sim_out;
  sim->add_option("--policy", sim_policy, "random | scripted | path to weights");
  sim->add_option("--out", sim_out, "Trajectory file");

  auto* train = app.add_subcommand("train", "Train PPO policies (one file per seed)");
  train_c.add(train);
  std::string train_mode = "curriculum", train_out;
  std::vector<int> train_seeds;
  int train_n = 0;
  long train_steps = 0;
  train->add_option("--mode", train_mode, "curriculum | naive")
      ->check(CLI::IsMember({"curriculum", "naive"}));
  auto* seeds_opt = train->add_option("--train-seeds", train_seeds, "Explicit seed indices");
  train->add_option("--seeds", train_n, "Train seed indices 0..N-1")
      ->check(CLI::PositiveNumber)
      ->excludes(seeds_opt);
  train->add_option("--steps", train_steps, "Total environment steps per seed");
  train->add_option("--out", train_out, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Generate pairwise collision samples");
  gen_c.add(gen);
  long gen_reps = 0;
  int gen_horizon = 0;
  std::string gen_out;
  gen->add_option("--repetitions", gen_reps, "Monte Carlo repetitions");
  gen->add_option("--horizon", gen_horizon, "Steps per repetition");
  gen->add_option("--out", gen_out, "Dataset file (JSON lines)");

  auto* tcm = app.add_subcommand("train-cm", "Train the collision model");
  tcm_c.add(tcm);
  std::string tcm_data, tcm_out;
  tcm->add_option("--data", tcm_data, "Dataset from gen-data")->required();
  tcm->add_option("--out", tcm_out, "Model file");

  struct EvalFlags {
    std::string method = "cl", weights, model, out;
    int seeds = 0, rollouts = 0;
    std::optional<double> theta, delta;
    std::optional<bool> pu_free;
    std::vector<double> grid;
  } ev, sw;
  auto add_eval = [](CLI::App* a, EvalFlags& f, bool with_method) {
    if (with_method)
      a->add_option("--method", f.method, "naive | cl | cl_cm")
          ->check(CLI::IsMember({"naive", "cl", "cl_cm"}));
    a->add_option("--weights", f.weights, "Directory with <mode>_seed<k>.json");
    a->add_option("--model", f.model, "Collision model file");
    a->add_option("--seeds", f.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    a->add_option("--rollouts", f.rollouts, "Rollouts per seed")->check(CLI::PositiveNumber);
    a->add_option("--theta", f.theta, "Override threshold")->check(CLI::Range(0.0, 1.0));
    a->add_option("--delta", f.delta, "Candidate margin below the higher peak")
        ->check(CLI::NonNegativeNumber);
    a->add_option("--require-pu-free", f.pu_free, "Only override while the PU is free");
    a->add_option("--grid", f.grid, "Threshold grid for the sweep");
    a->add_option("--out", f.out, "Output directory");
  };
  auto* eval = app.add_subcommand("evaluate", "Evaluate trained policies");
  eval_c.add(eval);
  add_eval(eval, ev, true);
  auto* sweep = app.add_subcommand("sweep", "Sweep the override threshold");
  sweep_c.add(sweep);
  add_eval(sweep, sw, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const char* msg = nullptr;
  if (*sim) {
    cm_simulate_options o;
    cm_simulate_options_init(&o);
    o.common = sim_c.to_c();
    o.policy = sim_policy.c_str();
    o.out_path = sim_out.c_str();
    return report(cm_simulate(&o, &msg), msg);
  }
  if (*train) {
    cm_train_options o;
    cm_train_options_init(&o);
    o.common = train_c.to_c();
    o.mode = train_mode.c_str();
    if (train_n > 0)
      for (int k = 0; k < train_n; ++k) train_seeds.push_back(k);
    if (!train_seeds.empty()) {
      o.seeds = train_seeds.data();
      o.n_seeds = train_seeds.size();
    }
    o.total_steps = train_steps;
    o.out_dir = train_out.c_str();
    return report(cm_train(&o, &msg), msg);
  }
  if (*gen) {
    cm_gen_data_options o;
    cm_gen_data_options_init(&o);
    o.common = gen_c.to_c();
    o.repetitions = gen_reps;
    o.horizon = gen_horizon;
    o.out_path = gen_out.c_str();
    return report(cm_gen_data(&o, &msg), msg);
  }
  if (*tcm) {
    cm_train_cm_options o;
    cm_train_cm_options_init(&o);
    o.common = tcm_c.to_c();
    o.dataset_path = tcm_data.c_str();
    o.out_path = tcm_out.c_str();
    return report(cm_train_cm(&o, &msg), msg);
  }
  const bool is_sweep = sweep->parsed();
  const EvalFlags& f = is_sweep ? sw : ev;
  cm_evaluate_options o;
  cm_evaluate_options_init(&o);
  o.common = (is_sweep ? sweep_c : eval_c).to_c();
  o.method = is_sweep ? "cl_cm" : f.method.c_str();
  o.weights_dir = f.weights.c_str();
  o.model_path = f.model.c_str();
  o.n_seeds = f.seeds;
  o.n_rollouts = f.rollouts;
  o.has_theta = f.theta.has_value();
  o.theta = f.theta.value_or(0.0);
  o.has_delta = f.delta.has_value();
  o.delta = f.delta.value_or(0.0);
  o.require_pu_free = f.pu_free ? (*f.pu_free ? 1 : 0) : -1;
  if (!f.grid.empty()) {
    o.theta_grid = f.grid.data();
    o.theta_grid_length = f.grid.size();
  }
  o.out_dir = f.out.c_str();
  return report(is_sweep ? cm_sweep(&o, &msg) : cm_evaluate(&o, &msg), msg);
}
