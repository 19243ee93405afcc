#ifndef PREFCAL_APP_HPP
#define PREFCAL_APP_HPP

// Experiment configuration and the command implementations behind the
// prefcal executable.

#include "prefcal/env.hpp"
#include "prefcal/prefdata.hpp"
#include "prefcal/trainer.hpp"
#include "prefcal/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace prefcal::app {

inline constexpr std::uint64_t kDefaultSeed = 1;

enum class ExitCode : int { ok = 0, usage = 2, divergence = 3, verification = 4 };

enum class RewardLaw { gaussian, bimodal, table };
enum class RefLaw { uniform, gaussian_logits };

struct EnvGenSpec {
  int prompts = 1;
  int responses = 2;
  RewardLaw reward_law = RewardLaw::gaussian;
  double reward_scale = 1.0;  // gaussian
  double gap = 1.0;           // bimodal
  std::optional<LogitTable> table;
  std::uint64_t reward_seed = kDefaultSeed;
  RefLaw ref_law = RefLaw::uniform;
  double ref_scale = 1.0;  // gaussian_logits
  std::uint64_t ref_seed = kDefaultSeed;

  void validate() const;
};

// gaussian: r ~ scale * N(0, 1). bimodal: two distinct responses per prompt
// get exactly `gap`, the rest gap * (u - 1/2). Ref logits are zero (uniform)
// or scale * N(0, 1).
Environment generate_environment(const EnvGenSpec& spec);

EnvGenSpec env_gen_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EnvGenSpec& spec);

enum class OracleMode { none, environment, convention };

struct DatasetSpec {
  int n_pairs = 1000;
  std::uint64_t seed = kDefaultSeed;
  Labeling labeling = Labeling::bt;
  OracleMode oracle = OracleMode::none;

  void validate() const;
};

PreferenceDataset generate_dataset(const Environment& env, const DatasetSpec& spec);

struct ExperimentConfig {
  std::uint64_t seed = kDefaultSeed;
  std::variant<std::filesystem::path, EnvGenSpec, Environment> environment = EnvGenSpec{};
  std::variant<std::monostate, std::filesystem::path, DatasetSpec> dataset;
  TrainConfig train;
  std::filesystem::path output_dir = "out";
  std::vector<double> sweep_betas;

  nlohmann::json to_json() const;
};

// Relative paths in the document resolve against base_dir.
// default_seed applies where the document omits a seed.
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  std::uint64_t default_seed = kDefaultSeed);
ExperimentConfig load_config(const std::filesystem::path& path, std::uint64_t default_seed = kDefaultSeed);

// Command-line values; each one set replaces the config field.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<std::string> method;
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<std::filesystem::path> out;
};

void apply_overrides(ExperimentConfig& config, const Overrides& overrides);

Environment resolve_environment(const ExperimentConfig& config);
std::optional<PreferenceDataset> resolve_dataset(const ExperimentConfig& config, const Environment& env);

// Writes train_log.csv, final_policy.json, population_report.csv and
// manifest.json into config.output_dir.
std::filesystem::path cmd_run(const ExperimentConfig& config);

// Writes sweep.csv (one row per beta; the default grid when none is given).
std::filesystem::path cmd_sweep(const ExperimentConfig& config);

struct VerifyOutcome {
  std::vector<VerificationSuiteResult> results;
  bool asserting_pass = true;
};

// Writes verify_report.json and verify_population.csv into out_dir.
VerifyOutcome cmd_verify(const std::vector<Suite>& suites, int trials, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

// The paired DPO / Cal-DPO reward-dynamics fixture: 50 prompts x 8
// responses, gaussian rewards, uniform reference, 2000 BT-labeled pairs,
// beta 0.01, lr 0.5, 2000 full-batch steps from zeros.
struct DynamicsConfig {
  std::uint64_t seed = kDefaultSeed;
  int prompts = 50;
  int responses = 8;
  int n_pairs = 2000;
  double beta = 0.01;
  double learning_rate = 0.5;
  int steps = 2000;
  int log_every = 10;
};

struct DynamicsResult {
  TrainLog dpo;
  TrainLog cal_dpo;
};

DynamicsResult run_dynamics(const DynamicsConfig& config);

// Writes dpo_train_log.csv, cal_dpo_train_log.csv, dynamics.csv and
// manifest.json into out_dir.
DynamicsResult cmd_dynamics(const DynamicsConfig& config, const std::filesystem::path& out_dir);

int run_cli(int argc, char** argv);

}  // namespace prefcal::app

#endif  // PREFCAL_APP_HPP
