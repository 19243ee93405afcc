#include "prefcal/app.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/population.hpp"
#include "prefcal/rng.hpp"

#include <sstream>

namespace prefcal::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& doc) { io::write_file_atomic(path, doc.dump(2) + "\n"); }

std::vector<PopulationReportRow> report_rows(const Environment& env, double beta, const PolicyParams& policy,
                                             int instance) {
  std::vector<PopulationReportRow> rows;
  for (int x = 0; x < env.num_prompts(); ++x) rows.push_back({instance, population_caldpo_loss(env, beta, policy, x)});
  return rows;
}

// Seed stream tag for the instances behind verify_population.csv.
constexpr std::uint64_t kReportStream = 0x7265706f7274ULL;

}  // namespace

fs::path cmd_run(const ExperimentConfig& config) {
  const Environment env = resolve_environment(config);
  const std::optional<PreferenceDataset> dataset = resolve_dataset(config, env);
  const TrainResult result = train(config.train, env, dataset ? &*dataset : nullptr, config.seed);

  const fs::path& out = config.output_dir;
  io::write_file_atomic(out / "train_log.csv", result.log.to_csv());
  write_json(out / "final_policy.json", {{"method", std::string(to_string(config.train.loss.method))},
                                         {"beta", config.train.loss.beta},
                                         {"env_fingerprint", env.fingerprint()},
                                         {"logits", prefcal::to_json(result.policy.logits)}});
  io::write_file_atomic(out / "population_report.csv",
                        population_report_csv(report_rows(env, config.train.loss.beta, result.policy, 0)));

  json manifest = {{"command", "train"},
                   {"config", config.to_json()},
                   {"env_fingerprint", env.fingerprint()},
                   {"outputs", {"train_log.csv", "final_policy.json", "population_report.csv"}}};
  if (dataset) manifest["dataset_pairs"] = dataset->pairs.size();
  write_json(out / "manifest.json", manifest);
  return out;
}

fs::path cmd_sweep(const ExperimentConfig& config) {
  const Environment env = resolve_environment(config);
  const std::optional<PreferenceDataset> dataset = resolve_dataset(config, env);
  const std::vector<double> betas =
      config.sweep_betas.empty() ? std::vector<double>(std::begin(kDefaultBetaGrid), std::end(kDefaultBetaGrid))
                                 : config.sweep_betas;
  const auto rows = beta_sweep(config.train, betas, env, dataset ? &*dataset : nullptr, config.seed);
  const fs::path& out = config.output_dir;
  io::write_file_atomic(out / "sweep.csv", sweep_to_csv(rows));
  ExperimentConfig echoed = config;
  echoed.sweep_betas = betas;
  write_json(out / "sweep_manifest.json", {{"command", "sweep-beta"},
                                          {"config", echoed.to_json()},
                                          {"env_fingerprint", env.fingerprint()},
                                          {"outputs", {"sweep.csv"}}});
  return out;
}

VerifyOutcome cmd_verify(const std::vector<Suite>& suites, int trials, std::uint64_t seed, const fs::path& out_dir) {
  if (suites.empty()) throw Error(Errc::configuration, "no verification suites selected");
  if (trials < 1) throw Error(Errc::configuration, "trials must be at least 1");
  VerifyOutcome outcome;
  json suites_json = json::array();
  for (Suite s : suites) {
    VerificationSuiteResult r = run_suite(s, trials, seed);
    if (r.asserting && !r.pass) outcome.asserting_pass = false;
    suites_json.push_back(r.to_json());
    outcome.results.push_back(std::move(r));
  }

  std::vector<PopulationReportRow> rows;
  Rng rng(mix_seed(seed, kReportStream));
  for (int t = 0; t < trials; ++t) {
    const Instance inst = random_instance(rng);
    auto part = report_rows(inst.env, inst.beta, inst.policy, t);
    rows.insert(rows.end(), part.begin(), part.end());
  }

  write_json(out_dir / "verify_report.json",
             {{"seed", seed}, {"trials", trials}, {"pass", outcome.asserting_pass}, {"suites", suites_json}});
  io::write_file_atomic(out_dir / "verify_population.csv", population_report_csv(rows));
  return outcome;
}

DynamicsResult run_dynamics(const DynamicsConfig& config) {
  EnvGenSpec spec;
  spec.prompts = config.prompts;
  spec.responses = config.responses;
  spec.reward_law = RewardLaw::gaussian;
  spec.reward_seed = config.seed;
  spec.ref_law = RefLaw::uniform;
  const Environment env = generate_environment(spec);
  const PreferenceDataset data = sample_dataset(env, config.n_pairs, mix_seed(config.seed, 2), Labeling::bt);

  TrainConfig train_cfg;
  train_cfg.loss.beta = config.beta;
  train_cfg.steps = config.steps;
  train_cfg.learning_rate = config.learning_rate;
  train_cfg.log_every = config.log_every;
  train_cfg.init.kind = InitKind::zeros;

  DynamicsResult result;
  train_cfg.loss.method = Method::DPO;
  result.dpo = train(train_cfg, env, &data, config.seed).log;
  train_cfg.loss.method = Method::CAL_DPO;
  result.cal_dpo = train(train_cfg, env, &data, config.seed).log;
  return result;
}

DynamicsResult cmd_dynamics(const DynamicsConfig& config, const fs::path& out_dir) {
  DynamicsResult r = run_dynamics(config);
  io::write_file_atomic(out_dir / "dpo_train_log.csv", r.dpo.to_csv());
  io::write_file_atomic(out_dir / "cal_dpo_train_log.csv", r.cal_dpo.to_csv());

  std::ostringstream side;
  side << "step";
  for (const char* m : {"dpo", "cal_dpo"}) {
    for (const char* col : {"loss", "chosen_reward_mean", "rejected_reward_mean", "margin_mean", "forward_kl_mean",
                            "reverse_kl_mean"}) {
      side << ',' << m << '_' << col;
    }
  }
  side << '\n';
  for (std::size_t i = 0; i < r.dpo.rows.size(); ++i) {
    side << r.dpo.rows[i].step;
    for (const TrainLogRow* row : {&r.dpo.rows[i], &r.cal_dpo.rows[i]}) {
      for (double v : {row->loss, row->chosen_reward_mean, row->rejected_reward_mean, row->margin_mean,
                       row->forward_kl_mean, row->reverse_kl_mean}) {
        side << ',' << io::format_double(v);
      }
    }
    side << '\n';
  }
  io::write_file_atomic(out_dir / "dynamics.csv", side.str());

  write_json(out_dir / "manifest.json", {{"command", "dynamics"},
                                         {"seed", config.seed},
                                         {"prompts", config.prompts},
                                         {"responses", config.responses},
                                         {"n_pairs", config.n_pairs},
                                         {"beta", config.beta},
                                         {"learning_rate", config.learning_rate},
                                         {"steps", config.steps},
                                         {"log_every", config.log_every},
                                         {"methods", {"DPO", "CAL_DPO"}},
                                         {"outputs", {"dpo_train_log.csv", "cal_dpo_train_log.csv", "dynamics.csv"}}});
  return r;
}

}  // namespace prefcal::app
