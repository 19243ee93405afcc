#include "prefcal/population.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace prefcal {

namespace {

struct PromptView {
  Eigen::VectorXd log_pi;
  Eigen::VectorXd pi;
  Eigen::VectorXd log_ref;
  Eigen::VectorXd ref;
  Eigen::VectorXd log_opt;
  Eigen::VectorXd opt;
};

PromptView view(const Environment& env, double beta, const PolicyParams& policy, int x) {
  check_beta(beta);
  env.check_prompt(x);
  if (x >= static_cast<int>(policy.logits.size()) ||
      policy.logits[static_cast<std::size_t>(x)].size() != env.num_responses(x)) {
    throw Error(Errc::invalid_input, "policy shape does not match the environment");
  }
  PromptView v;
  v.log_pi = log_policy(policy, x);
  v.pi = v.log_pi.array().exp().matrix();
  v.log_ref = env.log_ref(x);
  v.ref = env.ref_probs(x);
  v.log_opt = log_optimal_policy(env, beta, x);
  v.opt = v.log_opt.array().exp().matrix();
  return v;
}

LogitTable embed(const PolicyParams& policy, int x, Eigen::VectorXd row) {
  LogitTable out = zeros_like(policy.logits);
  out[static_cast<std::size_t>(x)] = std::move(row);
  return out;
}

// Ground-truth weights w = exp(r/beta - log Z).
Eigen::VectorXd truth_weights(const Environment& env, double beta, int x) {
  return ((env.reward(x) / beta).array() - log_partition(env, beta, x)).exp().matrix();
}

}  // namespace

double forward_kl(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  return numeric::kl_from_logs(v.log_opt, v.log_pi);
}

double reverse_kl(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  return numeric::kl_from_logs(v.log_pi, v.log_opt);
}

double optimal_to_reference_kl(const Environment& env, double beta, int x) {
  return numeric::kl_from_logs(log_optimal_policy(env, beta, x), env.log_ref(x));
}

double policy_to_reference_kl(const Environment& env, const PolicyParams& policy, int x) {
  env.check_prompt(x);
  return numeric::kl_from_logs(log_policy(policy, x), env.log_ref(x));
}

double population_mle_loss(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const Eigen::VectorXd w = truth_weights(env, beta, x);
  return -(v.ref.array() * w.array() * v.log_pi.array()).sum();
}

double population_first_term(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const Eigen::VectorXd w = truth_weights(env, beta, x);
  const Eigen::VectorXd log_ratio = v.log_pi - v.log_ref;
  // log E_ref[pi/pi_ref], kept explicit rather than assumed zero
  const double log_norm = numeric::log_sum_exp((v.log_ref + log_ratio).eval());
  return -(v.ref.array() * w.array() * (log_ratio.array() - log_norm)).sum();
}

double population_calibration_term(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const Eigen::VectorXd res = v.log_pi - v.log_ref - env.reward(x) / beta;
  return (v.ref.array() * res.array().square()).sum();
}

PopulationReport population_caldpo_loss(const Environment& env, double beta, const PolicyParams& policy, int x) {
  PopulationReport r;
  r.prompt = x;
  r.forward_kl = forward_kl(env, beta, policy, x);
  r.reverse_kl = reverse_kl(env, beta, policy, x);
  r.mle_loss = population_mle_loss(env, beta, policy, x);
  r.first_term = population_first_term(env, beta, policy, x);
  r.calibration_term = population_calibration_term(env, beta, policy, x);
  r.caldpo_population_loss = r.first_term + r.calibration_term;
  r.log_partition = log_partition(env, beta, x);
  r.first_term_via_forward_kl = r.forward_kl - optimal_to_reference_kl(env, beta, x);
  r.theorem2_gap_raw = r.caldpo_population_loss - r.reverse_kl;
  r.theorem2_gap_corrected = (r.forward_kl + r.calibration_term) - r.reverse_kl;
  return r;
}

std::string population_report_csv(const std::vector<PopulationReportRow>& rows) {
  std::ostringstream out;
  out << kPopulationReportHeader << '\n';
  for (const auto& [instance, r] : rows) {
    const bool identity = std::abs(r.first_term - r.first_term_via_forward_kl) <= 1e-9;
    const bool decomposition = std::abs(r.caldpo_population_loss - (r.first_term + r.calibration_term)) <= 1e-10;
    const bool nonnegative = r.forward_kl >= -1e-12 && r.reverse_kl >= -1e-12 && r.calibration_term >= 0.0;
    out << instance << ',' << r.prompt;
    for (double v : {r.forward_kl, r.reverse_kl, r.mle_loss, r.caldpo_population_loss, r.first_term,
                     r.calibration_term, r.log_partition, r.theorem2_gap_raw, r.theorem2_gap_corrected,
                     r.first_term_via_forward_kl}) {
      out << ',' << io::format_double(v);
    }
    out << ',' << identity << ',' << decomposition << ',' << nonnegative << '\n';
  }
  return out.str();
}

ContrastWeights contrast_weights(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  ContrastWeights cw;
  cw.w = truth_weights(env, beta, x);
  const Eigen::VectorXd raw = (v.log_pi - v.log_ref).array().exp().matrix();
  cw.w_hat = raw / v.ref.dot(raw);
  return cw;
}

LogitTable theorem1_gradient(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const ContrastWeights cw = contrast_weights(env, beta, policy, x);
  // grad_j = -sum_y pi_ref(y) (w - w_hat)(y) ([y == j] - pi_j)
  const Eigen::VectorXd c = v.ref.cwiseProduct(cw.w - cw.w_hat);
  return embed(policy, x, -(c - v.pi * c.sum()));
}

LogitTable first_term_gradient(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  // first = -sum_y pi*(y) (log pi(y) - log pi_ref(y) - log S), S = sum_y pi(y)
  const double s = v.pi.sum();
  const double mass = v.opt.sum();
  const Eigen::VectorXd d_log_pi = v.opt - v.pi * mass;
  const Eigen::VectorXd d_log_s = mass * (v.pi / s - v.pi);
  return embed(policy, x, -(d_log_pi - d_log_s));
}

LogitTable mle_gradient(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const Eigen::VectorXd c = v.ref.cwiseProduct(truth_weights(env, beta, x));
  return embed(policy, x, -(c - v.pi * c.sum()));
}

LogitTable calibration_term_gradient(const Environment& env, double beta, const PolicyParams& policy, int x) {
  const auto v = view(env, beta, policy, x);
  const Eigen::VectorXd res = v.log_pi - v.log_ref - env.reward(x) / beta;
  const Eigen::VectorXd c = 2.0 * v.ref.cwiseProduct(res);
  return embed(policy, x, c - v.pi * c.sum());
}

Theorem2Report theorem2_diagnostic(const Environment& env, double beta, const PolicyParams& policy) {
  check_beta(beta);
  check_policy(policy, env);
  Theorem2Report rep;
  rep.min_raw_gap = std::numeric_limits<double>::infinity();
  rep.min_corrected_gap = std::numeric_limits<double>::infinity();
  for (int x = 0; x < env.num_prompts(); ++x) {
    PopulationReport r = population_caldpo_loss(env, beta, policy, x);
    if (r.theorem2_gap_raw < -rep.tolerance) ++rep.raw_violations;
    if (r.theorem2_gap_corrected < -rep.tolerance) ++rep.corrected_violations;
    rep.min_raw_gap = std::min(rep.min_raw_gap, r.theorem2_gap_raw);
    rep.min_corrected_gap = std::min(rep.min_corrected_gap, r.theorem2_gap_corrected);
    rep.optimal_to_reference_kl.push_back(optimal_to_reference_kl(env, beta, x));
    rep.rows.push_back(r);
  }
  return rep;
}

std::pair<double, double> estimate_weights(double beta, double reward_chosen, double reward_rejected) {
  check_beta(beta);
  const double z = (reward_chosen - reward_rejected) / beta;
  return {numeric::sigmoid(z), numeric::sigmoid(-z)};
}

double empirical_population_estimate(const Environment& env, double beta, const PolicyParams& policy,
                                     const PreferencePair& pair) {
  check_beta(beta);
  check_pair(pair, env);
  if (!pair.has_oracle_rewards()) {
    throw Error(Errc::invalid_input, "empirical population estimate needs oracle rewards on the pair");
  }
  const double rw = *pair.oracle_reward_chosen;
  const double rl = *pair.oracle_reward_rejected;
  const Eigen::VectorXd r_hat = implicit_rewards(policy, env, pair.prompt);
  const double h = r_hat[pair.chosen] - r_hat[pair.rejected];
  const auto [weight_w, weight_l] = estimate_weights(beta, rw, rl);
  // log(w_hat_w / (w_hat_w + w_hat_l)) = log sigma(h), and symmetrically for y_l
  const double contrastive = weight_w * numeric::softplus(-h) + weight_l * numeric::softplus(h);
  const double res_w = r_hat[pair.chosen] - rw / beta;
  const double res_l = r_hat[pair.rejected] - rl / beta;
  return contrastive + res_w * res_w + res_l * res_l;
}

LossValue population_objective(const LossSpec& spec, const PolicyParams& policy, const Environment& env) {
  spec.validate();
  check_policy(policy, env);
  if (spec.method != Method::CAL_DPO && spec.method != Method::BT) {
    throw Error(Errc::configuration, std::string("no population objective for method ") +
                                         std::string(to_string(spec.method)) + " (use CAL_DPO or BT)");
  }
  const bool calibrated = spec.method == Method::CAL_DPO;
  const double k = static_cast<double>(env.num_prompts());
  numeric::CompensatedSum<double> value;
  LossValue out{0.0, zeros_like(policy.logits)};
  for (int x = 0; x < env.num_prompts(); ++x) {
    const auto ux = static_cast<std::size_t>(x);
    value.add(population_first_term(env, spec.beta, policy, x));
    out.grad[ux] += theorem1_gradient(env, spec.beta, policy, x)[ux] / k;
    if (calibrated) {
      value.add(population_calibration_term(env, spec.beta, policy, x));
      out.grad[ux] += calibration_term_gradient(env, spec.beta, policy, x)[ux] / k;
    }
  }
  out.value = value.value() / k;
  return out;
}

}  // namespace prefcal
