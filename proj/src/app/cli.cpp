#include "prefcal/app.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/rng.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace prefcal::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPrecedence =
    "Precedence: command-line flags > config file > PREFCAL_SEED (seed only) > built-in defaults.";

std::uint64_t default_seed() {
  const char* env = std::getenv("PREFCAL_SEED");
  if (env == nullptr || *env == '\0') return kDefaultSeed;
  try {
    std::size_t used = 0;
    const std::string text(env);
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::configuration, "PREFCAL_SEED must be a non-negative integer");
  }
}

struct TrainFlags {
  std::string config;
  Overrides o;
  std::vector<double> betas;
};

void add_override_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config file (JSON)")->required();
  cmd->add_option("--seed", f.o.seed, "Run seed (overrides config)");
  cmd->add_option("--beta", f.o.beta, "Loss beta (overrides config)");
  cmd->add_option("--method", f.o.method, "Loss method: DPO, BT, IPO, SLIC, CAL_DPO, CAL_IPO, CAL_SLIC");
  cmd->add_option("--steps", f.o.steps, "Gradient steps (overrides config)");
  cmd->add_option("--lr", f.o.lr, "Learning rate (overrides config)");
  cmd->add_option("--out", f.o.out, "Output directory (overrides config)");
}

ExperimentConfig resolved_config(const TrainFlags& f) {
  ExperimentConfig c = load_config(f.config, default_seed());
  apply_overrides(c, f.o);
  if (!f.betas.empty()) c.sweep_betas = f.betas;
  return c;
}

struct GenEnvFlags {
  std::string config;
  std::optional<int> prompts, responses;
  std::optional<std::string> reward_law, ref_law;
  std::optional<double> reward_scale, gap, ref_scale;
  std::optional<std::uint64_t> seed;
  std::string out = "env.json";
};

EnvGenSpec gen_env_spec(const GenEnvFlags& f) {
  EnvGenSpec s;
  if (!f.config.empty()) {
    json doc;
    try {
      doc = json::parse(io::read_file(f.config));
    } catch (const json::exception& e) {
      throw Error(Errc::configuration, "cannot parse " + f.config + ": " + e.what());
    }
    if (doc.contains("environment") && doc.at("environment").contains("generate")) {
      doc = doc.at("environment").at("generate");
    }
    s = env_gen_spec_from_json(doc);
  } else {
    s.reward_seed = default_seed();
    s.ref_seed = mix_seed(s.reward_seed, 1);
  }
  if (f.prompts) s.prompts = *f.prompts;
  if (f.responses) s.responses = *f.responses;
  if (f.reward_law) {
    if (*f.reward_law == "gaussian") s.reward_law = RewardLaw::gaussian;
    else if (*f.reward_law == "bimodal") s.reward_law = RewardLaw::bimodal;
    else throw Error(Errc::configuration, "--reward-law must be gaussian or bimodal (tables need --config)");
  }
  if (f.ref_law) {
    if (*f.ref_law == "uniform") s.ref_law = RefLaw::uniform;
    else if (*f.ref_law == "gaussian_logits") s.ref_law = RefLaw::gaussian_logits;
    else throw Error(Errc::configuration, "--ref-law must be uniform or gaussian_logits");
  }
  if (f.reward_scale) s.reward_scale = *f.reward_scale;
  if (f.gap) s.gap = *f.gap;
  if (f.ref_scale) s.ref_scale = *f.ref_scale;
  if (f.seed) {
    s.reward_seed = *f.seed;
    s.ref_seed = mix_seed(*f.seed, 1);
  }
  if (s.reward_law == RewardLaw::table && (f.prompts || f.responses)) {
    throw Error(Errc::configuration, "--prompts/--responses cannot resize a reward table");
  }
  s.validate();
  return s;
}

struct GenDataFlags {
  std::string env;
  int pairs = 1000;
  std::optional<std::uint64_t> seed;
  std::string labeling = "bt";
  std::string oracle = "none";
  std::string out = "data.ndjson";
};

struct VerifyFlags {
  std::vector<std::string> suites;
  int trials = 100;
  std::optional<std::uint64_t> seed;
  std::string out = "verify_out";
};

struct DynamicsFlags {
  std::optional<std::uint64_t> seed;
  DynamicsConfig cfg;
  std::string out = "dynamics_out";
};

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::divergence: return static_cast<int>(ExitCode::divergence);
    case Errc::probe_failure: return static_cast<int>(ExitCode::verification);
    default: return static_cast<int>(ExitCode::usage);
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"prefcal: calibrated preference optimization over tabular softmax policies"};
  app.footer(kPrecedence);
  app.require_subcommand(1);

  GenEnvFlags ge;
  auto* gen_env = app.add_subcommand("gen-env", "Generate an environment file");
  gen_env->add_option("--config", ge.config, "Generator spec (JSON), bare or under environment.generate");
  gen_env->add_option("--prompts", ge.prompts, "Number of prompts (>= 1)");
  gen_env->add_option("--responses", ge.responses, "Responses per prompt (>= 2)");
  gen_env->add_option("--reward-law", ge.reward_law, "gaussian or bimodal");
  gen_env->add_option("--reward-scale", ge.reward_scale, "Standard deviation of gaussian rewards");
  gen_env->add_option("--gap", ge.gap, "Mode value of bimodal rewards");
  gen_env->add_option("--ref-law", ge.ref_law, "uniform or gaussian_logits");
  gen_env->add_option("--ref-scale", ge.ref_scale, "Standard deviation of gaussian reference logits");
  gen_env->add_option("--seed", ge.seed, "Generator seed");
  gen_env->add_option("--out", ge.out, "Output environment file")->capture_default_str();

  GenDataFlags gd;
  auto* gen_data = app.add_subcommand("gen-data", "Sample a preference dataset from an environment");
  gen_data->add_option("--env", gd.env, "Environment file")->required();
  gen_data->add_option("--pairs", gd.pairs, "Number of pairs (>= 1)")->capture_default_str();
  gen_data->add_option("--seed", gd.seed, "Sampling seed");
  gen_data->add_option("--labeling", gd.labeling, "bt or hard")->capture_default_str();
  gen_data->add_option("--oracle", gd.oracle, "Oracle rewards to attach: none, environment or convention")
      ->capture_default_str();
  gen_data->add_option("--out", gd.out, "Output dataset file (NDJSON)")->capture_default_str();

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration and write logs, policy and report");
  add_override_flags(train_cmd, tf);
  train_cmd->footer(kPrecedence);

  TrainFlags sf;
  auto* sweep_cmd = app.add_subcommand("sweep-beta", "Train once per beta and write sweep.csv");
  add_override_flags(sweep_cmd, sf);
  sweep_cmd->add_option("--betas", sf.betas, "Beta grid (overrides config; default 1e-3 2e-3 3e-3 1e-2 1e-1)");
  sweep_cmd->footer(kPrecedence);

  VerifyFlags vf;
  auto* verify_cmd = app.add_subcommand("verify", "Run the verification suites");
  verify_cmd->add_option("--suite", vf.suites, "Suite to run (repeatable): gradients, theorem1, theorem2, "
                                               "identities, beta_limit; default all");
  verify_cmd->add_option("--trials", vf.trials, "Random instances per suite (>= 1)")->capture_default_str();
  verify_cmd->add_option("--seed", vf.seed, "Verification seed");
  verify_cmd->add_option("--out", vf.out, "Output directory")->capture_default_str();

  DynamicsFlags df;
  auto* dyn_cmd = app.add_subcommand("dynamics", "Run the paired DPO / CAL_DPO reward-dynamics fixture");
  dyn_cmd->add_option("--seed", df.seed, "Fixture seed (environment, data and run)");
  dyn_cmd->add_option("--beta", df.cfg.beta, "Loss beta")->capture_default_str();
  dyn_cmd->add_option("--steps", df.cfg.steps, "Gradient steps")->capture_default_str();
  dyn_cmd->add_option("--lr", df.cfg.learning_rate, "Learning rate")->capture_default_str();
  dyn_cmd->add_option("--log-every", df.cfg.log_every, "Log interval in steps")->capture_default_str();
  dyn_cmd->add_option("--out", df.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (gen_env->parsed()) {
      save_environment(generate_environment(gen_env_spec(ge)), ge.out);
    } else if (gen_data->parsed()) {
      DatasetSpec spec;
      spec.n_pairs = gd.pairs;
      spec.seed = gd.seed.value_or(default_seed());
      spec.labeling = labeling_from_string(gd.labeling);
      if (gd.oracle == "none") spec.oracle = OracleMode::none;
      else if (gd.oracle == "environment") spec.oracle = OracleMode::environment;
      else if (gd.oracle == "convention") spec.oracle = OracleMode::convention;
      else throw Error(Errc::configuration, "--oracle must be none, environment or convention");
      save_dataset(generate_dataset(load_environment(gd.env), spec), gd.out);
    } else if (train_cmd->parsed()) {
      const fs::path out = cmd_run(resolved_config(tf));
      std::cout << "wrote " << out.string() << '\n';
    } else if (sweep_cmd->parsed()) {
      const fs::path out = cmd_sweep(resolved_config(sf));
      std::cout << "wrote " << (out / "sweep.csv").string() << '\n';
    } else if (verify_cmd->parsed()) {
      std::vector<Suite> suites;
      for (const auto& name : vf.suites) suites.push_back(suite_from_string(name));
      if (vf.suites.empty()) suites.assign(std::begin(kAllSuites), std::end(kAllSuites));
      const VerifyOutcome outcome = cmd_verify(suites, vf.trials, vf.seed.value_or(default_seed()), vf.out);
      for (const auto& r : outcome.results) {
        std::cout << r.name << ": " << (r.pass ? "pass" : "FAIL") << (r.asserting ? "" : " (diagnostic)")
                  << "  max_deviation=" << io::format_double(r.max_deviation)
                  << " tolerance=" << io::format_double(r.tolerance) << '\n';
      }
      if (!outcome.asserting_pass) return static_cast<int>(ExitCode::verification);
    } else if (dyn_cmd->parsed()) {
      df.cfg.seed = df.seed.value_or(default_seed());
      const DynamicsResult r = cmd_dynamics(df.cfg, df.out);
      for (const auto& [name, log] : {std::pair{"DPO", &r.dpo}, std::pair{"CAL_DPO", &r.cal_dpo}}) {
        const TrainLogRow& last = log->final_row();
        std::cout << name << ": chosen_reward_mean=" << io::format_double(last.chosen_reward_mean)
                  << " rejected_reward_mean=" << io::format_double(last.rejected_reward_mean)
                  << " margin_mean=" << io::format_double(last.margin_mean) << '\n';
      }
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::divergence);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  }
  return static_cast<int>(ExitCode::ok);
}

}  // namespace prefcal::app
