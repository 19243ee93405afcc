#include "prefcal/env.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/numeric.hpp"

#include <cmath>
#include <string>

namespace prefcal {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

std::string where(int x) { return "prompt " + std::to_string(x); }

}  // namespace

Environment::Environment(LogitTable reward, LogitTable ref_logits)
    : reward_(std::move(reward)), ref_logits_(std::move(ref_logits)) {
  if (reward_.empty()) throw Error(Errc::invalid_environment, "environment has no prompts");
  if (reward_.size() != ref_logits_.size()) {
    throw Error(Errc::invalid_environment, "reward and ref_logits disagree on the prompt count");
  }
  ref_probs_.reserve(reward_.size());
  log_ref_.reserve(reward_.size());
  for (std::size_t x = 0; x < reward_.size(); ++x) {
    const int ix = static_cast<int>(x);
    if (reward_[x].size() < 2) {
      throw Error(Errc::invalid_environment, where(ix) + " has fewer than 2 responses");
    }
    if (reward_[x].size() != ref_logits_[x].size()) {
      throw Error(Errc::invalid_environment,
                  where(ix) + ": reward and ref_logits have different lengths");
    }
    if (!all_finite(reward_[x])) throw Error(Errc::invalid_environment, where(ix) + ": non-finite reward");
    if (!all_finite(ref_logits_[x])) {
      throw Error(Errc::invalid_environment, where(ix) + ": non-finite ref logit");
    }
    log_ref_.push_back(numeric::log_softmax(ref_logits_[x]));
    ref_probs_.push_back(log_ref_.back().array().exp().matrix());
    if (ref_probs_.back().minCoeff() < kMinRefProbability) {
      throw Error(Errc::invalid_environment,
                  where(ix) + ": reference probability below the full-support floor");
    }
  }
}

int Environment::num_responses(int x) const {
  check_prompt(x);
  return static_cast<int>(reward_[static_cast<std::size_t>(x)].size());
}

const Eigen::VectorXd& Environment::reward(int x) const {
  check_prompt(x);
  return reward_[static_cast<std::size_t>(x)];
}

double Environment::reward(int x, int y) const {
  check_response(x, y);
  return reward_[static_cast<std::size_t>(x)][y];
}

const Eigen::VectorXd& Environment::ref_logits(int x) const {
  check_prompt(x);
  return ref_logits_[static_cast<std::size_t>(x)];
}

const Eigen::VectorXd& Environment::ref_probs(int x) const {
  check_prompt(x);
  return ref_probs_[static_cast<std::size_t>(x)];
}

const Eigen::VectorXd& Environment::log_ref(int x) const {
  check_prompt(x);
  return log_ref_[static_cast<std::size_t>(x)];
}

void Environment::check_prompt(int x) const {
  if (x < 0 || x >= num_prompts()) {
    throw Error(Errc::invalid_input, "prompt index " + std::to_string(x) + " out of range");
  }
}

void Environment::check_response(int x, int y) const {
  check_prompt(x);
  if (y < 0 || y >= reward_[static_cast<std::size_t>(x)].size()) {
    throw Error(Errc::invalid_input,
                "response index " + std::to_string(y) + " out of range for " + where(x));
  }
}

Environment Environment::with_unit_partition(double beta) const {
  LogitTable shifted = reward_;
  for (int x = 0; x < num_prompts(); ++x) {
    shifted[static_cast<std::size_t>(x)].array() -= beta * log_partition(*this, beta, x);
  }
  return Environment(std::move(shifted), ref_logits_);
}

Environment Environment::with_rewards(LogitTable reward) const {
  return Environment(std::move(reward), ref_logits_);
}

std::string Environment::fingerprint() const { return io::fnv1a_hex(to_json(*this).dump()); }

PolicyParams PolicyParams::zeros_like(const Environment& env) {
  PolicyParams p;
  for (int x = 0; x < env.num_prompts(); ++x) p.logits.push_back(Eigen::VectorXd::Zero(env.num_responses(x)));
  return p;
}

PolicyParams PolicyParams::copy_of_ref(const Environment& env) {
  return PolicyParams{env.ref_logit_table()};
}

void check_policy(const PolicyParams& policy, const Environment& env) {
  if (static_cast<int>(policy.logits.size()) != env.num_prompts()) {
    throw Error(Errc::invalid_input, "policy prompt count does not match the environment");
  }
  for (int x = 0; x < env.num_prompts(); ++x) {
    const auto& row = policy.logits[static_cast<std::size_t>(x)];
    if (row.size() != env.num_responses(x)) {
      throw Error(Errc::invalid_input, "policy row length mismatch at " + where(x));
    }
    if (!row.allFinite()) throw Error(Errc::invalid_input, "non-finite policy logit at " + where(x));
  }
}

LogitTable zeros_like(const LogitTable& table) {
  LogitTable out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(Eigen::VectorXd::Zero(row.size()));
  return out;
}

Distribution softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw Error(Errc::invalid_input, "softmax of an empty vector");
  if (!logits.allFinite()) throw Error(Errc::invalid_input, "softmax of non-finite logits");
  return Distribution{numeric::softmax(logits)};
}

Eigen::VectorXd log_policy(const PolicyParams& policy, int x) {
  if (x < 0 || x >= static_cast<int>(policy.logits.size())) {
    throw Error(Errc::invalid_input, "prompt index " + std::to_string(x) + " out of range");
  }
  return numeric::log_softmax(policy.logits[static_cast<std::size_t>(x)]);
}

Distribution policy_distribution(const PolicyParams& policy, int x) {
  return Distribution{log_policy(policy, x).array().exp().matrix()};
}

Eigen::VectorXd implicit_rewards(const PolicyParams& policy, const Environment& env, int x) {
  env.check_prompt(x);
  if (x >= static_cast<int>(policy.logits.size()) ||
      policy.logits[static_cast<std::size_t>(x)].size() != env.num_responses(x)) {
    throw Error(Errc::invalid_input, "policy shape does not match the environment at " + where(x));
  }
  return log_policy(policy, x) - env.log_ref(x);
}

double implicit_reward(const PolicyParams& policy, const Environment& env, int x, int y) {
  env.check_response(x, y);
  return implicit_rewards(policy, env, x)[y];
}

double preference_score(const PolicyParams& policy, const Environment& env, int x, int chosen,
                        int rejected) {
  env.check_response(x, chosen);
  env.check_response(x, rejected);
  if (chosen == rejected) throw Error(Errc::invalid_input, "preference score of a response with itself");
  const Eigen::VectorXd r = implicit_rewards(policy, env, x);
  return r[chosen] - r[rejected];
}

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(Errc::invalid_parameter, "beta must be a positive finite number");
  }
}

Eigen::VectorXd log_optimal_policy(const Environment& env, double beta, int x) {
  check_beta(beta);
  return numeric::log_softmax((env.log_ref(x) + env.reward(x) / beta).eval());
}

Distribution optimal_policy(const Environment& env, double beta, int x) {
  return Distribution{log_optimal_policy(env, beta, x).array().exp().matrix()};
}

double log_partition(const Environment& env, double beta, int x) {
  check_beta(beta);
  return numeric::log_sum_exp((env.log_ref(x) + env.reward(x) / beta).eval());
}

PolicyParams optimal_policy_params(const Environment& env, double beta) {
  PolicyParams p;
  for (int x = 0; x < env.num_prompts(); ++x) p.logits.push_back(log_optimal_policy(env, beta, x));
  return p;
}

nlohmann::json to_json(const LogitTable& table) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : table) out.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  return out;
}

LogitTable logit_table_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw Error(Errc::invalid_input, "expected a nested array of numbers");
  LogitTable table;
  for (const auto& row : doc) {
    const auto values = row.get<std::vector<double>>();
    table.emplace_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return table;
}

nlohmann::json to_json(const Environment& env) {
  nlohmann::json responses = nlohmann::json::array();
  for (int x = 0; x < env.num_prompts(); ++x) responses.push_back(env.num_responses(x));
  return {
      {"prompts", env.num_prompts()},
      {"responses", responses},
      {"reward", to_json(env.rewards())},
      {"ref_logits", to_json(env.ref_logit_table())},
  };
}

Environment environment_from_json(const nlohmann::json& doc) {
  try {
    const int prompts = doc.at("prompts").get<int>();
    const auto responses = doc.at("responses").get<std::vector<int>>();
    LogitTable reward = logit_table_from_json(doc.at("reward"));
    LogitTable ref = logit_table_from_json(doc.at("ref_logits"));
    if (prompts < 1 || static_cast<int>(responses.size()) != prompts ||
        static_cast<int>(reward.size()) != prompts || static_cast<int>(ref.size()) != prompts) {
      throw Error(Errc::invalid_environment, "environment prompt counts are inconsistent");
    }
    for (int x = 0; x < prompts; ++x) {
      const auto n = static_cast<Eigen::Index>(responses[static_cast<std::size_t>(x)]);
      if (reward[static_cast<std::size_t>(x)].size() != n || ref[static_cast<std::size_t>(x)].size() != n) {
        throw Error(Errc::invalid_environment, where(x) + ": response count disagrees with the tables");
      }
    }
    return Environment(std::move(reward), std::move(ref));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_environment, std::string("malformed environment: ") + e.what());
  }
}

Environment load_environment(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_environment, path.string() + ": " + e.what());
  }
  return environment_from_json(doc);
}

void save_environment(const Environment& env, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(env).dump(1) + "\n");
}

}  // namespace prefcal
