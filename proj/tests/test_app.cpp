#include "prefcal/app.hpp"

#include "prefcal/io.hpp"
#include "prefcal/population.hpp"

#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace prefcal;
using namespace prefcal::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "environment": {"generate": {"prompts": 3, "responses": 4,
                                 "reward_law": {"kind": "gaussian", "scale": 1.0, "seed": 5},
                                 "ref_law": {"kind": "uniform"}}},
    "dataset": {"n_pairs": 100, "seed": 6},
    "train": {"loss": {"method": "CAL_DPO", "beta": 0.1}, "steps": 20, "learning_rate": 0.05, "log_every": 5},
    "output_dir": "run"
  })");
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("environment generation") {
  EnvGenSpec s;
  s.prompts = 1;
  s.responses = 8;
  s.reward_law = RewardLaw::bimodal;
  s.gap = 2.0;
  s.reward_seed = 7;
  const Environment env = generate_environment(s);
  const Eigen::VectorXd& r = env.reward(0);
  const double top = r.maxCoeff();
  CHECK(top == 2.0);
  CHECK(((r.array() - top).abs() <= 1e-9).count() == 2);

  CHECK(generate_environment(s).fingerprint() == env.fingerprint());

  EnvGenSpec zeros;
  zeros.reward_law = RewardLaw::table;
  zeros.table = LogitTable{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
  const Environment z = environment_from_json(to_json(generate_environment(zeros)));
  for (double beta : {1e-3, 0.5, 10.0}) {
    for (int x = 0; x < 2; ++x) {
      CHECK((optimal_policy(z, beta, x).probs - z.ref_probs(x)).cwiseAbs().maxCoeff() <= 1e-15);
    }
  }

  EnvGenSpec bad;
  bad.responses = 1;
  CHECK_ERRC(generate_environment(bad), Errc::configuration);
  bad.responses = 2;
  bad.prompts = 0;
  CHECK_ERRC(generate_environment(bad), Errc::configuration);
}

TEST_CASE("generator spec JSON") {
  const EnvGenSpec s = env_gen_spec_from_json(json::parse(R"({"prompts": 2, "responses": 3,
      "reward_law": {"kind": "gaussian", "scale": 0.5, "seed": 9},
      "ref_law": {"kind": "gaussian_logits", "scale": 0.3, "seed": 10}})"));
  CHECK(s.prompts == 2);
  CHECK(s.ref_law == RefLaw::gaussian_logits);
  CHECK(env_gen_spec_from_json(to_json(s)).reward_seed == 9);
  CHECK(generate_environment(env_gen_spec_from_json(to_json(s))).fingerprint() == generate_environment(s).fingerprint());
  CHECK_ERRC(env_gen_spec_from_json(json::parse(R"({"prompts": 2})")), Errc::configuration);
  CHECK_ERRC(env_gen_spec_from_json(json::parse(R"({"reward_law": {"kind": "cauchy"}})")), Errc::configuration);
}

TEST_CASE("experiment config parsing and overrides") {
  const ExperimentConfig c = config_from_json(small_config(), "/base");
  CHECK(c.seed == 3);
  CHECK(c.output_dir == fs::path("/base/run"));
  CHECK(c.train.loss.method == Method::CAL_DPO);
  CHECK(std::get<DatasetSpec>(c.dataset).n_pairs == 100);

  ExperimentConfig o = c;
  apply_overrides(o, Overrides{42, 0.02, "DPO", 7, 0.5, fs::path("/elsewhere")});
  CHECK(o.seed == 42);
  CHECK(o.train.loss.beta == 0.02);
  CHECK(o.train.loss.method == Method::DPO);
  CHECK(o.train.steps == 7);
  CHECK(o.train.learning_rate == 0.5);
  CHECK(o.output_dir == fs::path("/elsewhere"));

  CHECK_ERRC(apply_overrides(o, Overrides{{}, {}, "PPO", {}, {}, {}}), Errc::configuration);
  CHECK_ERRC(apply_overrides(o, Overrides{{}, {}, {}, 0, {}, {}}), Errc::configuration);

  json no_seed = small_config();
  no_seed.erase("seed");
  CHECK(config_from_json(no_seed, ".", 99).seed == 99);

  json missing = small_config();
  missing["environment"] = {{"file", "no_such_env.json"}};
  CHECK_ERRC(config_from_json(missing, "/tmp"), Errc::configuration);

  json bad_steps = small_config();
  bad_steps["train"]["steps"] = 0;
  CHECK_ERRC(config_from_json(bad_steps, "."), Errc::configuration);

  CHECK_ERRC(load_config("/nonexistent/prefcal.json"), Errc::configuration);
}

TEST_CASE("config round trip through its manifest echo") {
  const ExperimentConfig c = config_from_json(small_config(), "/base");
  const ExperimentConfig back = config_from_json(c.to_json(), "/other");
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("cmd_run writes reproducible outputs") {
  TempDir tmp("prefcal_run_test");
  ExperimentConfig c = config_from_json(small_config(), tmp.path);
  cmd_run(c);
  const fs::path out = tmp.path / "run";
  for (const char* f : {"train_log.csv", "final_policy.json", "population_report.csv", "manifest.json"}) {
    CHECK(fs::exists(out / f));
  }
  const std::string log = io::read_file(out / "train_log.csv");
  const std::string manifest = io::read_file(out / "manifest.json");
  const std::string report = io::read_file(out / "population_report.csv");
  CHECK(line_count(report) == 4);
  CHECK(json::parse(manifest).at("env_fingerprint") == resolve_environment(c).fingerprint());

  cmd_run(c);
  CHECK(io::read_file(out / "train_log.csv") == log);
  CHECK(io::read_file(out / "manifest.json") == manifest);
  CHECK(io::read_file(out / "population_report.csv") == report);
}

TEST_CASE("lr = 0, steps = 1 writes the initial policy") {
  TempDir tmp("prefcal_lr0_test");
  json doc = small_config();
  doc["train"]["learning_rate"] = 0.0;
  doc["train"]["steps"] = 1;
  doc["train"]["init"] = {{"kind", "copy_of_ref_logits"}};
  const ExperimentConfig c = config_from_json(doc, tmp.path);
  cmd_run(c);
  const json policy = json::parse(io::read_file(tmp.path / "run" / "final_policy.json"));
  const LogitTable logits = logit_table_from_json(policy.at("logits"));
  CHECK(testing::max_abs_diff(logits, resolve_environment(c).ref_logit_table()) == 0.0);
}

TEST_CASE("dataset and environment files") {
  TempDir tmp("prefcal_files_test");
  const ExperimentConfig gen = config_from_json(small_config(), tmp.path);
  const Environment env = resolve_environment(gen);
  save_environment(env, tmp.path / "env.json");
  save_dataset(generate_dataset(env, DatasetSpec{50, 2, Labeling::hard, OracleMode::convention}), tmp.path / "d.ndjson");

  json doc = small_config();
  doc["environment"] = {{"file", "env.json"}};
  doc["dataset"] = {{"file", "d.ndjson"}};
  const ExperimentConfig c = config_from_json(doc, tmp.path);
  const auto data = resolve_dataset(c, resolve_environment(c));
  REQUIRE(data.has_value());
  CHECK(data->pairs.size() == 50);
  CHECK(data->pairs.front().has_oracle_rewards());

  json other = small_config();
  other["environment"]["generate"]["reward_law"]["seed"] = 77;
  save_environment(resolve_environment(config_from_json(other, tmp.path)), tmp.path / "env.json");
  CHECK_ERRC(resolve_dataset(c, resolve_environment(c)), Errc::dataset_mismatch);
}

TEST_CASE("beta sweep command") {
  TempDir tmp("prefcal_sweep_test");
  const ExperimentConfig c = config_from_json(small_config(), tmp.path);
  cmd_sweep(c);
  const std::string csv = io::read_file(tmp.path / "run" / "sweep.csv");
  CHECK(line_count(csv) == 6);
}

TEST_CASE("verify command") {
  TempDir tmp("prefcal_verify_test");
  const VerifyOutcome all = cmd_verify({std::begin(kAllSuites), std::end(kAllSuites)}, 20, 1, tmp.path);
  CHECK(all.asserting_pass);
  const json report = json::parse(io::read_file(tmp.path / "verify_report.json"));
  CHECK(report.at("suites").size() == 5);
  const std::string pop = io::read_file(tmp.path / "verify_population.csv");
  CHECK(pop.rfind(kPopulationReportHeader, 0) == 0);
  CHECK(line_count(pop) > 20);

  CHECK(cmd_verify({Suite::theorem2}, 5, 1, tmp.path).asserting_pass);
  CHECK_ERRC(cmd_verify({Suite::theorem2}, 0, 1, tmp.path), Errc::configuration);
  CHECK_ERRC(cmd_verify({}, 5, 1, tmp.path), Errc::configuration);
}

TEST_CASE("dynamics command is deterministic") {
  TempDir a("prefcal_dyn_a");
  TempDir b("prefcal_dyn_b");
  DynamicsConfig cfg;
  cfg.prompts = 5;
  cfg.n_pairs = 100;
  cfg.steps = 50;
  const DynamicsResult r = cmd_dynamics(cfg, a.path);
  cmd_dynamics(cfg, b.path);
  for (const char* f : {"dpo_train_log.csv", "cal_dpo_train_log.csv", "dynamics.csv", "manifest.json"}) {
    CHECK(io::read_file(a.path / f) == io::read_file(b.path / f));
  }
  CHECK(r.dpo.rows.size() == r.cal_dpo.rows.size());
  CHECK(line_count(io::read_file(a.path / "dynamics.csv")) == r.dpo.rows.size() + 1);
}
