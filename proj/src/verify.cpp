#include "prefcal/verify.hpp"

#include "prefcal/error.hpp"
#include "prefcal/losses.hpp"
#include "prefcal/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prefcal {

LogitTable finite_diff_grad(const ScalarFn& fn, const PolicyParams& policy, double step) {
  if (!(step > 0.0)) throw Error(Errc::invalid_parameter, "finite-difference step must be positive");
  LogitTable grad = zeros_like(policy.logits);
  PolicyParams probe = policy;
  for (std::size_t x = 0; x < policy.logits.size(); ++x) {
    for (Eigen::Index y = 0; y < policy.logits[x].size(); ++y) {
      const double orig = probe.logits[x][y];
      probe.logits[x][y] = orig + step;
      const double plus = fn(probe);
      probe.logits[x][y] = orig - step;
      const double minus = fn(probe);
      probe.logits[x][y] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw Error(Errc::probe_failure, "non-finite function value probing coordinate (" +
                                             std::to_string(x) + ", " + std::to_string(y) + ")");
      }
      grad[x][y] = (plus - minus) / (2.0 * step);
    }
  }
  return grad;
}

double relative_error(const LogitTable& analytic, const LogitTable& reference) {
  if (analytic.size() != reference.size()) throw Error(Errc::invalid_input, "gradient shape mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t x = 0; x < analytic.size(); ++x) {
    if (analytic[x].size() != reference[x].size()) throw Error(Errc::invalid_input, "gradient shape mismatch");
    if (analytic[x].size() == 0) continue;
    diff = std::max(diff, (analytic[x] - reference[x]).cwiseAbs().maxCoeff());
    scale = std::max(scale, analytic[x].cwiseAbs().maxCoeff());
  }
  return diff / (1.0 + scale);
}

Instance random_instance(Rng& rng) {
  const int prompts = 1 + rng.index(4);
  LogitTable reward, ref;
  for (int x = 0; x < prompts; ++x) {
    const int m = 2 + rng.index(7);
    Eigen::VectorXd r(m), l(m);
    for (int y = 0; y < m; ++y) r[y] = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < m; ++y) l[y] = rng.gaussian();
    reward.push_back(r);
    ref.push_back(l);
  }
  Instance inst{Environment(std::move(reward), std::move(ref)), {}, 1.0, {}};
  inst.policy = PolicyParams::zeros_like(inst.env);
  for (auto& row : inst.policy.logits) {
    for (Eigen::Index y = 0; y < row.size(); ++y) row[y] = rng.gaussian();
  }
  inst.beta = std::exp(rng.uniform(std::log(1e-2), std::log(1.0)));
  const int x = rng.index(prompts);
  const int m = inst.env.num_responses(x);
  const int a = rng.index(m);
  int b = rng.index(m - 1);
  if (b >= a) ++b;
  inst.pair = PreferencePair{x, a, b, std::nullopt, std::nullopt};
  return inst;
}

nlohmann::json to_json(const Instance& instance) {
  nlohmann::json pair = {{"x", instance.pair.prompt}, {"yw", instance.pair.chosen}, {"yl", instance.pair.rejected}};
  if (instance.pair.has_oracle_rewards()) {
    pair["rw"] = *instance.pair.oracle_reward_chosen;
    pair["rl"] = *instance.pair.oracle_reward_rejected;
  }
  return {{"env", to_json(instance.env)},
          {"theta", to_json(instance.policy.logits)},
          {"beta", instance.beta},
          {"pair", pair}};
}

Instance theorem2_counterexample() {
  constexpr double beta = 0.5;
  Eigen::VectorXd reward(3), ref(3);
  reward << 1.0, 0.0, -1.0;
  ref << 0.5, 0.0, -0.5;
  Environment env = Environment({reward}, {ref}).with_unit_partition(beta);
  PolicyParams policy = optimal_policy_params(env, beta);
  return Instance{env, policy, beta, PreferencePair{0, 0, 2, std::nullopt, std::nullopt}};
}

std::string_view to_string(Suite suite) {
  switch (suite) {
    case Suite::gradients: return "gradients";
    case Suite::theorem1: return "theorem1";
    case Suite::theorem2: return "theorem2";
    case Suite::identities: return "identities";
    case Suite::beta_limit: return "beta_limit";
  }
  return "?";
}

Suite suite_from_string(std::string_view name) {
  for (Suite s : kAllSuites) {
    if (to_string(s) == name) return s;
  }
  throw Error(Errc::configuration, "unknown verification suite '" + std::string(name) + "'");
}

nlohmann::json VerificationSuiteResult::to_json() const {
  nlohmann::json checks_json = nlohmann::json::array();
  for (const auto& c : checks) {
    checks_json.push_back({{"name", c.name}, {"max_deviation", c.max_deviation}, {"tolerance", c.tolerance}, {"pass", c.pass}});
  }
  nlohmann::json failures_json = nlohmann::json::array();
  for (const auto& f : failures) {
    failures_json.push_back({{"trial", f.trial}, {"check", f.check}, {"deviation", f.deviation}, {"inputs", f.inputs}});
  }
  return {{"suite", name},       {"instances", instances}, {"max_deviation", max_deviation},
          {"tolerance", tolerance}, {"pass", pass},         {"asserting", asserting},
          {"checks", checks_json}, {"failures", failures_json}, {"statistics", statistics}};
}

namespace {

constexpr std::size_t kMaxEchoedFailures = 20;

class SuiteBuilder {
 public:
  SuiteBuilder(Suite suite, bool asserting) {
    result_.name = std::string(to_string(suite));
    result_.asserting = asserting;
  }

  void declare(const std::string& check, double tolerance) {
    result_.checks.push_back({check, 0.0, tolerance, true});
  }

  void record(const std::string& check, double deviation, int trial, const Instance& inst) {
    auto it = std::find_if(result_.checks.begin(), result_.checks.end(),
                           [&](const CheckResult& c) { return c.name == check; });
    if (it == result_.checks.end()) throw Error(Errc::invalid_input, "undeclared check " + check);
    // NaN counts as a failure
    if (!(deviation <= it->tolerance)) {
      it->pass = false;
      if (result_.failures.size() < kMaxEchoedFailures) {
        result_.failures.push_back({trial, check, deviation, to_json(inst)});
      }
    }
    if (std::isnan(deviation)) deviation = std::numeric_limits<double>::infinity();
    it->max_deviation = std::max(it->max_deviation, deviation);
  }

  VerificationSuiteResult finish(int instances) {
    result_.instances = instances;
    double worst = -1.0;
    for (const auto& c : result_.checks) {
      result_.pass = result_.pass && c.pass;
      const double ratio = c.max_deviation / c.tolerance;
      if (ratio > worst) {
        worst = ratio;
        result_.max_deviation = c.max_deviation;
        result_.tolerance = c.tolerance;
      }
    }
    return result_;
  }

  nlohmann::json& statistics() { return result_.statistics; }

 private:
  VerificationSuiteResult result_;
};

double worst_over_prompts(const Instance& inst, const std::function<double(int)>& dev) {
  double worst = 0.0;
  for (int x = 0; x < inst.env.num_prompts(); ++x) {
    const double d = dev(x);
    if (std::isnan(d)) return d;
    worst = std::max(worst, d);
  }
  return worst;
}

VerificationSuiteResult gradients_suite(int trials, Rng& rng) {
  SuiteBuilder b(Suite::gradients, true);
  constexpr double tol = 1e-6;
  b.declare("pair_losses", tol);
  b.declare("population_first_term", tol);
  b.declare("population_mle", tol);
  b.declare("population_calibration", tol);
  for (int t = 0; t < trials; ++t) {
    Instance inst = random_instance(rng);
    // odd trials exercise oracle-reward calibration targets
    if (t % 2 == 1) {
      inst.pair.oracle_reward_chosen = inst.env.reward(inst.pair.prompt, inst.pair.chosen);
      inst.pair.oracle_reward_rejected = inst.env.reward(inst.pair.prompt, inst.pair.rejected);
    }
    double worst = 0.0;
    for (Method m : kAllMethods) {
      const LossSpec spec{m, inst.beta, std::nullopt, std::nullopt};
      const LossValue lv = any_pair_loss(spec, inst.policy, inst.env, inst.pair);
      const auto fd = finite_diff_grad(
          [&](const PolicyParams& p) { return any_pair_loss(spec, p, inst.env, inst.pair).value; }, inst.policy);
      worst = std::max(worst, relative_error(lv.grad, fd));
    }
    b.record("pair_losses", worst, t, inst);

    const int x = inst.pair.prompt;
    const auto& env = inst.env;
    const double beta = inst.beta;
    b.record("population_first_term",
             relative_error(theorem1_gradient(env, beta, inst.policy, x),
                            finite_diff_grad([&](const PolicyParams& p) { return population_first_term(env, beta, p, x); },
                                             inst.policy)),
             t, inst);
    b.record("population_mle",
             relative_error(mle_gradient(env, beta, inst.policy, x),
                            finite_diff_grad([&](const PolicyParams& p) { return population_mle_loss(env, beta, p, x); },
                                             inst.policy)),
             t, inst);
    b.record("population_calibration",
             relative_error(calibration_term_gradient(env, beta, inst.policy, x),
                            finite_diff_grad(
                                [&](const PolicyParams& p) { return population_calibration_term(env, beta, p, x); },
                                inst.policy)),
             t, inst);
  }
  return b.finish(trials);
}

VerificationSuiteResult theorem1_suite(int trials, Rng& rng) {
  SuiteBuilder b(Suite::theorem1, true);
  b.declare("constant_offset", 1e-9);
  b.declare("gradient_identity", 1e-8);
  for (int t = 0; t < trials; ++t) {
    const Instance inst = random_instance(rng);
    b.record("constant_offset", worst_over_prompts(inst, [&](int x) {
               return std::abs(population_first_term(inst.env, inst.beta, inst.policy, x) -
                               forward_kl(inst.env, inst.beta, inst.policy, x) +
                               optimal_to_reference_kl(inst.env, inst.beta, x));
             }), t, inst);
    b.record("gradient_identity", worst_over_prompts(inst, [&](int x) {
               return relative_error(theorem1_gradient(inst.env, inst.beta, inst.policy, x),
                                     first_term_gradient(inst.env, inst.beta, inst.policy, x));
             }), t, inst);
  }
  return b.finish(trials);
}

VerificationSuiteResult identities_suite(int trials, Rng& rng) {
  SuiteBuilder b(Suite::identities, true);
  b.declare("reverse_kl_rlhf_identity", 1e-9);
  b.declare("first_term_cross_check", 1e-9);
  b.declare("weight_normalization", 1e-10);
  for (int t = 0; t < trials; ++t) {
    const Instance inst = random_instance(rng);
    const auto& env = inst.env;
    const double beta = inst.beta;
    b.record("reverse_kl_rlhf_identity", worst_over_prompts(inst, [&](int x) {
               const double lhs = beta * reverse_kl(env, beta, inst.policy, x) - beta * log_partition(env, beta, x);
               const Eigen::VectorXd pi = policy_distribution(inst.policy, x).probs;
               const double rhs = -(pi.dot(env.reward(x)) - beta * policy_to_reference_kl(env, inst.policy, x));
               return std::abs(lhs - rhs);
             }), t, inst);
    b.record("first_term_cross_check", worst_over_prompts(inst, [&](int x) {
               const PopulationReport r = population_caldpo_loss(env, beta, inst.policy, x);
               return std::max(std::abs(r.first_term - r.first_term_via_forward_kl),
                               std::abs(r.caldpo_population_loss - (r.first_term + r.calibration_term)));
             }), t, inst);
    b.record("weight_normalization", worst_over_prompts(inst, [&](int x) {
               const ContrastWeights cw = contrast_weights(env, beta, inst.policy, x);
               const Eigen::VectorXd& ref = env.ref_probs(x);
               return std::max(std::abs(ref.dot(cw.w) - 1.0), std::abs(ref.dot(cw.w_hat) - 1.0));
             }), t, inst);
  }
  return b.finish(trials);
}

VerificationSuiteResult beta_limit_suite(int trials, Rng& rng) {
  SuiteBuilder b(Suite::beta_limit, true);
  constexpr double beta = 1e-3;
  b.declare("estimate_matches_cal_dpo", 1e-9);
  b.declare("weight_saturation", 1e-10);
  const LossSpec spec{Method::CAL_DPO, beta, std::nullopt, std::nullopt};
  for (int t = 0; t < trials; ++t) {
    Instance inst = random_instance(rng);
    inst.beta = beta;
    inst.pair.oracle_reward_chosen = 0.5;
    inst.pair.oracle_reward_rejected = -0.5;
    const double estimate = empirical_population_estimate(inst.env, beta, inst.policy, inst.pair);
    const double loss = cal_pair_loss(spec, inst.policy, inst.env, inst.pair).value;
    b.record("estimate_matches_cal_dpo", std::abs(estimate - loss), t, inst);
    b.record("weight_saturation", std::abs(1.0 - estimate_weights(beta, 0.5, -0.5).first), t, inst);
  }
  return b.finish(trials);
}

VerificationSuiteResult theorem2_suite(int trials, Rng& rng) {
  SuiteBuilder b(Suite::theorem2, false);
  b.declare("counterexample_corrected_gap", 1e-12);

  long prompts = 0;
  long raw_violations = 0;
  long corrected_violations = 0;
  double min_raw = std::numeric_limits<double>::infinity();
  double min_corrected = std::numeric_limits<double>::infinity();
  const int random_trials = std::max(trials, kTheorem2MinInstances);
  for (int t = 0; t < random_trials; ++t) {
    const Instance inst = random_instance(rng);
    const Theorem2Report rep = theorem2_diagnostic(inst.env, inst.beta, inst.policy);
    prompts += static_cast<long>(rep.rows.size());
    raw_violations += rep.raw_violations;
    corrected_violations += rep.corrected_violations;
    min_raw = std::min(min_raw, rep.min_raw_gap);
    min_corrected = std::min(min_corrected, rep.min_corrected_gap);
  }

  const Instance ce = theorem2_counterexample();
  const Theorem2Report ce_rep = theorem2_diagnostic(ce.env, ce.beta, ce.policy);
  const PopulationReport& row = ce_rep.rows.front();
  b.record("counterexample_corrected_gap", std::abs(row.theorem2_gap_corrected), -1, ce);

  const double denom = prompts > 0 ? static_cast<double>(prompts) : 1.0;
  b.statistics() = {
      {"random_trials", random_trials},
      {"prompts_evaluated", prompts},
      {"raw_gap_violations", raw_violations},
      {"raw_gap_violation_rate", static_cast<double>(raw_violations) / denom},
      {"corrected_gap_violations", corrected_violations},
      {"corrected_gap_violation_rate", static_cast<double>(corrected_violations) / denom},
      {"min_raw_gap", min_raw},
      {"min_corrected_gap", min_corrected},
      {"violation_tolerance", ce_rep.tolerance},
      {"counterexample",
       {{"known_negative_raw_gap", row.theorem2_gap_raw < 0.0},
        {"theorem2_gap_raw", row.theorem2_gap_raw},
        {"theorem2_gap_corrected", row.theorem2_gap_corrected},
        {"reverse_kl", row.reverse_kl},
        {"calibration_term", row.calibration_term},
        {"log_partition", row.log_partition},
        {"optimal_to_reference_kl", ce_rep.optimal_to_reference_kl.front()},
        {"instance", to_json(ce)}}},
  };
  return b.finish(random_trials + 1);
}

}  // namespace

VerificationSuiteResult run_suite(Suite suite, int trials, std::uint64_t seed) {
  if (trials < 1) throw Error(Errc::configuration, "trials must be at least 1");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(suite)));
  switch (suite) {
    case Suite::gradients: return gradients_suite(trials, rng);
    case Suite::theorem1: return theorem1_suite(trials, rng);
    case Suite::theorem2: return theorem2_suite(trials, rng);
    case Suite::identities: return identities_suite(trials, rng);
    case Suite::beta_limit: return beta_limit_suite(trials, rng);
  }
  throw Error(Errc::configuration, "unknown suite");
}

}  // namespace prefcal
