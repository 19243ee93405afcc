#ifndef PREFCAL_ENV_HPP
#define PREFCAL_ENV_HPP

// Finite prompt/response environments, tabular softmax policies, implicit
// rewards and the closed-form KL-regularized optimum
//   pi*(y|x) = pi_ref(y|x) exp(r(x,y)/beta) / Z(x).

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace prefcal {

// One logit (or gradient) vector per prompt; rows may differ in length.
using LogitTable = std::vector<Eigen::VectorXd>;

struct Distribution {
  Eigen::VectorXd probs;
};

// Smallest reference probability accepted at load time.
inline constexpr double kMinRefProbability = 1e-9;

class Environment {
 public:
  Environment() = default;
  // Validates: at least one prompt, >= 2 responses per prompt, matching
  // shapes, finite entries and pi_ref >= kMinRefProbability everywhere.
  Environment(LogitTable reward, LogitTable ref_logits);

  int num_prompts() const { return static_cast<int>(reward_.size()); }
  int num_responses(int x) const;

  const Eigen::VectorXd& reward(int x) const;
  double reward(int x, int y) const;
  const Eigen::VectorXd& ref_logits(int x) const;
  const Eigen::VectorXd& ref_probs(int x) const;
  const Eigen::VectorXd& log_ref(int x) const;

  const LogitTable& rewards() const { return reward_; }
  const LogitTable& ref_logit_table() const { return ref_logits_; }

  // Same reference policy, rewards shifted per prompt by -beta log Z(x) so
  // that the partition function is exactly one.
  Environment with_unit_partition(double beta) const;
  Environment with_rewards(LogitTable reward) const;

  void check_prompt(int x) const;
  void check_response(int x, int y) const;

  std::string fingerprint() const;

 private:
  LogitTable reward_;
  LogitTable ref_logits_;
  LogitTable ref_probs_;
  LogitTable log_ref_;
};

struct PolicyParams {
  LogitTable logits;

  static PolicyParams zeros_like(const Environment& env);
  static PolicyParams copy_of_ref(const Environment& env);
};

// Throws invalid_input when the table does not match the environment's shape
// or holds non-finite entries.
void check_policy(const PolicyParams& policy, const Environment& env);

LogitTable zeros_like(const LogitTable& table);

Distribution softmax(const Eigen::VectorXd& logits);

Eigen::VectorXd log_policy(const PolicyParams& policy, int x);
Distribution policy_distribution(const PolicyParams& policy, int x);

// log pi_theta(y|x) - log pi_ref(y|x), for one response and for a whole row.
double implicit_reward(const PolicyParams& policy, const Environment& env, int x, int y);
Eigen::VectorXd implicit_rewards(const PolicyParams& policy, const Environment& env, int x);

// h = r_hat(x, y_w) - r_hat(x, y_l).
double preference_score(const PolicyParams& policy, const Environment& env, int x,
                        int chosen, int rejected);

Eigen::VectorXd log_optimal_policy(const Environment& env, double beta, int x);
Distribution optimal_policy(const Environment& env, double beta, int x);
double log_partition(const Environment& env, double beta, int x);

// Policy whose logits are log pi*(.|x) for every prompt.
PolicyParams optimal_policy_params(const Environment& env, double beta);

void check_beta(double beta);

nlohmann::json to_json(const Environment& env);
Environment environment_from_json(const nlohmann::json& doc);
Environment load_environment(const std::filesystem::path& path);
void save_environment(const Environment& env, const std::filesystem::path& path);

nlohmann::json to_json(const LogitTable& table);
LogitTable logit_table_from_json(const nlohmann::json& doc);

}  // namespace prefcal

#endif  // PREFCAL_ENV_HPP
