#ifndef PREFCAL_VERIFY_HPP
#define PREFCAL_VERIFY_HPP

// Independent oracles (central finite differences) and the bundled
// verification suites over random tabular instances.

#include "prefcal/env.hpp"
#include "prefcal/prefdata.hpp"
#include "prefcal/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace prefcal {

using ScalarFn = std::function<double(const PolicyParams&)>;

inline constexpr double kFiniteDiffStep = 1e-5;
// The theorem2 suite always gathers violation rates over at least this many
// random instances.
inline constexpr int kTheorem2MinInstances = 1000;

// (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps) for every coordinate.
LogitTable finite_diff_grad(const ScalarFn& fn, const PolicyParams& policy, double step = kFiniteDiffStep);

// ||a - b||_inf / (1 + ||a||_inf)
double relative_error(const LogitTable& analytic, const LogitTable& reference);

struct Instance {
  Environment env;
  PolicyParams policy;
  double beta = 1.0;
  PreferencePair pair;
};

// K in 1..4, M in 2..8 per prompt, rewards U[-1, 1], ref and policy logits
// N(0, 1), beta log-uniform in [1e-2, 1], plus one random pair.
Instance random_instance(Rng& rng);

nlohmann::json to_json(const Instance& instance);

// pi_theta = pi* on an environment shifted to log Z = 0: reverse KL and
// calibration vanish, so the raw gap equals -KL(pi* || pi_ref) < 0.
Instance theorem2_counterexample();

enum class Suite { gradients, theorem1, theorem2, identities, beta_limit };

inline constexpr Suite kAllSuites[] = {Suite::gradients, Suite::theorem1, Suite::theorem2,
                                       Suite::identities, Suite::beta_limit};

std::string_view to_string(Suite suite);
Suite suite_from_string(std::string_view name);

struct CheckResult {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct SuiteFailure {
  int trial = 0;
  std::string check;
  double deviation = 0.0;
  nlohmann::json inputs;
};

struct VerificationSuiteResult {
  std::string name;
  int instances = 0;
  // Fields of the check with the largest deviation-to-tolerance ratio;
  // pass <=> max_deviation <= tolerance for every check.
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  // Diagnostic suites never influence the CLI exit status.
  bool asserting = true;
  std::vector<CheckResult> checks;
  std::vector<SuiteFailure> failures;
  nlohmann::json statistics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

VerificationSuiteResult run_suite(Suite suite, int trials, std::uint64_t seed);

}  // namespace prefcal

#endif  // PREFCAL_VERIFY_HPP
