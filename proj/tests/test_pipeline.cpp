#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "error.hpp"
#include "pipeline.hpp"

using namespace contmgr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p =
      fs::temp_directory_path() / ("contmgr_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough for a unit test: 3 containers, tiny networks and budgets.
fs::path write_tiny_config(const fs::path& dir) {
  json j = {{"seed", 11},
            {"facility", {{"containers", 3}}},
            {"ppo",
             {{"rollout_steps", 256}, {"minibatch_size", 64}, {"hidden", {8, 8}}}},
            {"train", {{"total_steps", 2000}}},
            {"data", {{"repetitions", 300}}},
            {"cm", {{"n_trees", 10}, {"min_samples_leaf", 5}}},
            {"eval", {{"seeds", 2}, {"rollouts", 1}, {"theta_grid", {0.9, 0.2, 0.5}}}}};
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

constexpr auto kNoError = static_cast<ErrorCode>(0);

int count_of(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return kNoError;
}

}  // namespace

TEST_CASE("config defaults and round trip") {
  const PipelineConfig d = load_pipeline_config("");
  CHECK(d.facility.name == "7b1p");
  CHECK(d.n_seeds == 5);
  CHECK(d.n_rollouts == 3);

  PipelineConfig c = d;
  c.seed = 99;
  c.ppo.learning_rate = 5e-4;
  c.total_steps = 123450;
  c.override_cfg.theta = 0.3;
  c.theta_grid = {0.1, 0.7};
  const PipelineConfig r = pipeline_config_from_json(c.to_json());
  CHECK(r.to_json() == c.to_json());
  CHECK(r.seed == 99);
  CHECK(r.ppo.learning_rate == 5e-4);
  CHECK(r.schedule().total() == 123450);
}

TEST_CASE("facility shorthand builds the default NbIp layout") {
  const auto c = pipeline_config_from_json(json{{"facility", {{"containers", 9}}}});
  CHECK(c.facility.name == "9b1p");
  CHECK(c.facility.size() == 9);
}

TEST_CASE("config errors carry codes") {
  const fs::path dir = scratch("errors");
  CHECK(code_of([] { load_pipeline_config("/nonexistent/contmgr.json"); }) == ErrorCode::kIo);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(code_of([&] { load_pipeline_config((dir / "bad.json").string()); }) ==
        ErrorCode::kFormat);
  CHECK(code_of([] { pipeline_config_from_json(json{{"eval", {{"seeds", 0}}}}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([] { pipeline_config_from_json(json::array()); }) == ErrorCode::kFormat);
}

TEST_CASE("manifest hash ignores timestamps") {
  RunManifest a;
  a.command = "evaluate";
  a.seeds = {0, 1};
  a.started_at = "2024-01-01T00:00:00Z";
  RunManifest b = a;
  b.started_at = "2030-06-01T12:00:00Z";
  b.finished_at = "2030-06-01T12:05:00Z";
  CHECK(a.hash() == b.hash());
  b.seeds = {0, 2};
  CHECK(a.hash() != b.hash());
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("scripted policy empties the most overdue container") {
  const FacilityConfig c = default_facility(3);
  FacilityState s;
  s.volumes = {c.containers[0].peak_high + 1.0, c.containers[1].peak_high + 3.0, 1.0};
  s.pu_counter = 0;
  CHECK(scripted_action(s, c) == 2);
  s.pu_counter = 2;
  CHECK(scripted_action(s, c) == 0);
  s.pu_counter = 0;
  s.volumes = {1.0, 1.0, 1.0};
  CHECK(scripted_action(s, c) == 0);
}

TEST_CASE("simulate is deterministic and self-describing") {
  const fs::path dir = scratch("simulate");
  SimulateOptions o;
  o.common.containers = 4;
  o.common.seed = 5;
  o.policy = "scripted";
  o.out_path = (dir / "a.jsonl").string();
  const auto ra = cmd_simulate(o);
  const std::string first = slurp(dir / "a.jsonl");
  const auto rb = cmd_simulate(o);
  CHECK(first == slurp(dir / "a.jsonl"));
  CHECK(ra.manifest_hash == rb.manifest_hash);
  o.out_path = (dir / "b.jsonl").string();
  CHECK(cmd_simulate(o).manifest_hash != ra.manifest_hash);

  std::ifstream in(dir / "a.jsonl");
  std::string header;
  std::getline(in, header);
  const json h = json::parse(header);
  CHECK(h.at("manifest") == ra.manifest_hash);
  CHECK(h.at("facility") == "4b1p");
  CHECK(fs::exists(dir / "manifest_simulate.json"));

  o.policy = (dir / "missing_weights.json").string();
  CHECK(code_of([&] { cmd_simulate(o); }) != kNoError);
}

TEST_CASE("tiny end-to-end pipeline") {
  const fs::path dir = scratch("e2e");
  const fs::path cfg = write_tiny_config(dir);
  CommonOptions common;
  common.config_path = cfg.string();
  common.jobs = 2;

  TrainOptions t;
  t.common = common;
  t.mode = "curriculum";
  t.out_dir = dir.string();
  const auto tr = cmd_train(t);
  REQUIRE(fs::exists(dir / "curriculum_seed0.json"));
  REQUIRE(fs::exists(dir / "curriculum_seed1.json"));
  const std::string log = slurp(dir / "curriculum_seed0_log.csv");
  CHECK(count_of(log, "# boundary") == 3);
  CHECK(log.find(tr.manifest_hash) != std::string::npos);

  t.mode = "naive";
  t.seeds = {0};
  cmd_train(t);
  const std::string nlog = slurp(dir / "naive_seed0_log.csv");
  CHECK(count_of(nlog, "# boundary") == 1);

  SUBCASE("evaluation needs every seed's weights") {
    EvaluateOptions e;
    e.common = common;
    e.method = "naive";
    e.weights_dir = dir.string();
    e.out_dir = (dir / "eval_naive").string();
    try {
      cmd_evaluate(e);
      FAIL("expected missing weights");
    } catch (const Error& err) {
      CHECK(err.code() == ErrorCode::kMissingArtifact);
      CHECK(std::string(err.what()).find("seed 1") != std::string::npos);
    }
  }

  SUBCASE("collision model and sweep") {
    TrainCmOptions m;
    m.common = common;
    m.dataset_path = (dir / "missing.jsonl").string();
    m.out_path = (dir / "collision_model.json").string();
    CHECK(code_of([&] { cmd_train_cm(m); }) == ErrorCode::kMissingArtifact);

    GenDataOptions g;
    g.common = common;
    g.out_path = (dir / "pairs.jsonl").string();
    const auto gr = cmd_gen_data(g);
    CHECK(slurp(dir / "pairs.jsonl").find(gr.manifest_hash) != std::string::npos);
    m.dataset_path = g.out_path;
    cmd_train_cm(m);
    REQUIRE(fs::exists(dir / "collision_model.json"));
    CHECK(fs::exists(dir / "collision_model.json.report.json"));

    EvaluateOptions e;
    e.common = common;
    e.method = "cl_cm";
    e.weights_dir = dir.string();
    e.out_dir = (dir / "sweep").string();
    cmd_sweep(e);
    std::ifstream in(dir / "sweep" / "sweep_cl_cm_3b1p.csv");
    std::string line;
    int rows = 0, selected = 0;
    std::vector<double> thetas;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("theta", 0) == 0) continue;
      ++rows;
      thetas.push_back(std::stod(line));
      if (line.substr(line.rfind(',') + 1) == "1") ++selected;
    }
    CHECK(rows == 3);
    CHECK(selected == 1);
    CHECK(std::is_sorted(thetas.begin(), thetas.end()));

    e.out_dir = (dir / "eval_a").string();
    e.theta = 0.5;
    const auto ea = cmd_evaluate(e);
    const std::string first = slurp(dir / "eval_a" / "eval_cl_cm_3b1p.csv");
    const auto eb = cmd_evaluate(e);
    CHECK(ea.manifest_hash == eb.manifest_hash);
    CHECK(first == slurp(dir / "eval_a" / "eval_cl_cm_3b1p.csv"));
    CHECK(fs::exists(dir / "eval_a" / "eval_cl_cm_3b1p_summary.json"));
    CHECK(fs::exists(dir / "eval_a" / "plot_cl_cm_3b1p.csv"));
    CHECK(fs::exists(dir / "eval_a" / "manifest_evaluate.json"));
  }
}
