#include "prefcal/losses.hpp"

#include "prefcal/error.hpp"
#include "prefcal/numeric.hpp"

#include <cmath>
#include <string>

namespace prefcal {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::DPO: return "DPO";
    case Method::BT: return "BT";
    case Method::IPO: return "IPO";
    case Method::SLIC: return "SLIC";
    case Method::CAL_DPO: return "CAL_DPO";
    case Method::CAL_IPO: return "CAL_IPO";
    case Method::CAL_SLIC: return "CAL_SLIC";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw Error(Errc::configuration, "unknown loss method '" + std::string(name) + "'");
}

bool is_calibrated(Method method) {
  return method == Method::CAL_DPO || method == Method::CAL_IPO || method == Method::CAL_SLIC;
}

void LossSpec::validate() const {
  check_beta(beta);
  if (!std::isfinite(chosen_target()) || !std::isfinite(rejected_target())) {
    throw Error(Errc::invalid_parameter, "calibration targets must be finite");
  }
}

namespace detail {
namespace {

// Base contrastive term as a function of h; returns (value, dvalue/dh).
std::pair<double, double> contrastive(Method base, double beta, double h) {
  switch (base) {
    case Method::DPO: {
      const double z = beta * h;
      return {numeric::softplus(-z), -beta * numeric::sigmoid(-z)};
    }
    case Method::BT:
      return {numeric::softplus(-h), -numeric::sigmoid(-h)};
    case Method::IPO: {
      const double r = h - 0.5 / beta;
      return {r * r, 2.0 * r};
    }
    case Method::SLIC: {
      const double margin = 1.0 - beta * h;
      // subgradient 0 at the kink
      if (margin > 0.0) return {margin, -beta};
      return {0.0, 0.0};
    }
    default:
      break;
  }
  throw Error(Errc::wrong_operation, "not a contrastive base method");
}

Method base_of(Method method) {
  switch (method) {
    case Method::CAL_DPO: return Method::BT;
    case Method::CAL_IPO: return Method::IPO;
    case Method::CAL_SLIC: return Method::SLIC;
    default: return method;
  }
}

}  // namespace

PairTerms pair_terms(const LossSpec& spec, const PreferencePair& pair, double reward_chosen,
                     double reward_rejected) {
  const double h = reward_chosen - reward_rejected;
  const auto [base, dh] = contrastive(base_of(spec.method), spec.beta, h);
  PairTerms t{base, dh, -dh};
  if (!is_calibrated(spec.method)) return t;

  double target_w = spec.chosen_target();
  double target_l = spec.rejected_target();
  if (spec.default_targets() && pair.has_oracle_rewards()) {
    target_w = *pair.oracle_reward_chosen / spec.beta;
    target_l = *pair.oracle_reward_rejected / spec.beta;
  }
  const double res_w = reward_chosen - target_w;
  const double res_l = reward_rejected - target_l;
  t.value += res_w * res_w + res_l * res_l;
  t.d_chosen += 2.0 * res_w;
  t.d_rejected += 2.0 * res_l;
  return t;
}

}  // namespace detail

namespace {

LossValue evaluate(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                   const PreferencePair& pair) {
  spec.validate();
  check_pair(pair, env);
  check_policy(policy, env);
  const Eigen::VectorXd log_pi = log_policy(policy, pair.prompt);
  const Eigen::VectorXd r_hat = log_pi - env.log_ref(pair.prompt);
  const auto t = detail::pair_terms(spec, pair, r_hat[pair.chosen], r_hat[pair.rejected]);

  LossValue out{t.value, zeros_like(policy.logits)};
  Eigen::VectorXd& row = out.grad[static_cast<std::size_t>(pair.prompt)];
  row = -(t.d_chosen + t.d_rejected) * log_pi.array().exp().matrix();
  row[pair.chosen] += t.d_chosen;
  row[pair.rejected] += t.d_rejected;
  return out;
}

}  // namespace

LossValue pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                    const PreferencePair& pair) {
  if (is_calibrated(spec.method)) {
    throw Error(Errc::wrong_operation,
                std::string("pair_loss called with calibrated method ") + std::string(to_string(spec.method)));
  }
  return evaluate(spec, policy, env, pair);
}

LossValue cal_pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                        const PreferencePair& pair) {
  if (!is_calibrated(spec.method)) {
    throw Error(Errc::wrong_operation, std::string("cal_pair_loss called with uncalibrated method ") +
                                           std::string(to_string(spec.method)));
  }
  return evaluate(spec, policy, env, pair);
}

LossValue any_pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                        const PreferencePair& pair) {
  return evaluate(spec, policy, env, pair);
}

LossValue calibration_loss(const PolicyParams& policy, const Environment& env, int x, int y,
                           double target) {
  if (!std::isfinite(target)) throw Error(Errc::invalid_input, "calibration target must be finite");
  env.check_response(x, y);
  check_policy(policy, env);
  const Eigen::VectorXd log_pi = log_policy(policy, x);
  const double res = log_pi[y] - env.log_ref(x)[y] - target;

  LossValue out{res * res, zeros_like(policy.logits)};
  Eigen::VectorXd& row = out.grad[static_cast<std::size_t>(x)];
  row = -2.0 * res * log_pi.array().exp().matrix();
  row[y] += 2.0 * res;
  return out;
}

LossValue batch_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                     const PreferenceDataset& dataset) {
  check_dataset(dataset, env);
  return batch_loss(spec, policy, env, std::span<const PreferencePair>(dataset.pairs));
}

LossValue batch_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                     std::span<const PreferencePair> pairs) {
  if (pairs.empty()) throw Error(Errc::invalid_input, "batch_loss over an empty set of pairs");
  spec.validate();
  check_policy(policy, env);

  const int prompts = env.num_prompts();
  LogitTable log_pi(static_cast<std::size_t>(prompts));
  LogitTable r_hat(static_cast<std::size_t>(prompts));
  for (int x = 0; x < prompts; ++x) {
    log_pi[static_cast<std::size_t>(x)] = log_policy(policy, x);
    r_hat[static_cast<std::size_t>(x)] = log_pi[static_cast<std::size_t>(x)] - env.log_ref(x);
  }

  // Per-response derivative sums and per-prompt totals; the softmax part of
  // the gradient is applied once per row at the end.
  using Acc = numeric::CompensatedSum<double>;
  std::vector<std::vector<Acc>> coef(static_cast<std::size_t>(prompts));
  std::vector<Acc> row_total(static_cast<std::size_t>(prompts));
  for (int x = 0; x < prompts; ++x) coef[static_cast<std::size_t>(x)].resize(static_cast<std::size_t>(env.num_responses(x)));

  Acc value;
  for (const auto& pair : pairs) {
    check_pair(pair, env);
    const auto& r = r_hat[static_cast<std::size_t>(pair.prompt)];
    const auto t = detail::pair_terms(spec, pair, r[pair.chosen], r[pair.rejected]);
    value.add(t.value);
    auto& c = coef[static_cast<std::size_t>(pair.prompt)];
    c[static_cast<std::size_t>(pair.chosen)].add(t.d_chosen);
    c[static_cast<std::size_t>(pair.rejected)].add(t.d_rejected);
    row_total[static_cast<std::size_t>(pair.prompt)].add(t.d_chosen + t.d_rejected);
  }

  const double n = static_cast<double>(pairs.size());
  LossValue out{value.value() / n, zeros_like(policy.logits)};
  for (int x = 0; x < prompts; ++x) {
    const auto ux = static_cast<std::size_t>(x);
    const Eigen::VectorXd pi = log_pi[ux].array().exp().matrix();
    Eigen::VectorXd& row = out.grad[ux];
    for (Eigen::Index y = 0; y < row.size(); ++y) {
      row[y] = (coef[ux][static_cast<std::size_t>(y)].value() - row_total[ux].value() * pi[y]) / n;
    }
  }
  return out;
}

}  // namespace prefcal
