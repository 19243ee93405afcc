#ifndef PREFCAL_POPULATION_HPP
#define PREFCAL_POPULATION_HPP

// Exact population quantities for one prompt x. All expectations are finite
// sums over the response set.
//
//   w(y)      = exp(r(y)/beta) / Z                    (so pi_ref w = pi*)
//   w_hat(y)  = (pi(y)/pi_ref(y)) / E_ref[pi/pi_ref]
//   first     = -E_ref[w log(w_hat_raw / E_ref[w_hat_raw])]
//   calib     =  E_ref[(log(pi/pi_ref) - r/beta)^2]
//
// For tabular policies first = KL(pi* || pi) - KL(pi* || pi_ref) exactly.

#include "prefcal/env.hpp"
#include "prefcal/losses.hpp"
#include "prefcal/prefdata.hpp"

#include <string>
#include <utility>
#include <vector>

namespace prefcal {

struct PopulationReport {
  int prompt = 0;
  double forward_kl = 0.0;
  double reverse_kl = 0.0;
  double mle_loss = 0.0;
  double caldpo_population_loss = 0.0;
  double first_term = 0.0;
  double calibration_term = 0.0;
  double log_partition = 0.0;
  double theorem2_gap_raw = 0.0;
  double theorem2_gap_corrected = 0.0;
  // first_term recomputed as forward_kl - KL(pi* || pi_ref)
  double first_term_via_forward_kl = 0.0;
};

struct ContrastWeights {
  Eigen::VectorXd w;
  Eigen::VectorXd w_hat;
};

double forward_kl(const Environment& env, double beta, const PolicyParams& policy, int x);
double reverse_kl(const Environment& env, double beta, const PolicyParams& policy, int x);
// KL(pi* || pi_ref), independent of the policy.
double optimal_to_reference_kl(const Environment& env, double beta, int x);
// KL(pi || pi_ref).
double policy_to_reference_kl(const Environment& env, const PolicyParams& policy, int x);

double population_mle_loss(const Environment& env, double beta, const PolicyParams& policy, int x);
double population_first_term(const Environment& env, double beta, const PolicyParams& policy, int x);
double population_calibration_term(const Environment& env, double beta, const PolicyParams& policy, int x);
PopulationReport population_caldpo_loss(const Environment& env, double beta, const PolicyParams& policy, int x);

// One CSV row per (instance, prompt) with every report field and a 0/1 flag
// per exact identity.
inline constexpr const char* kPopulationReportHeader =
    "instance,prompt,forward_kl,reverse_kl,mle_loss,caldpo_population_loss,first_term,calibration_term,"
    "log_partition,theorem2_gap_raw,theorem2_gap_corrected,first_term_via_forward_kl,"
    "first_term_identity_ok,loss_decomposition_ok,divergences_nonnegative_ok";

struct PopulationReportRow {
  int instance = 0;
  PopulationReport report;
};

std::string population_report_csv(const std::vector<PopulationReportRow>& rows);

ContrastWeights contrast_weights(const Environment& env, double beta, const PolicyParams& policy, int x);

// Gradient of the first term in the contrastive-weight form
//   -E_ref[(w - w_hat) grad log pi];
// only row x is non-zero.
LogitTable theorem1_gradient(const Environment& env, double beta, const PolicyParams& policy, int x);
// Gradient of the first term by differentiating its defining formula directly
// (normalizer kept explicit).
LogitTable first_term_gradient(const Environment& env, double beta, const PolicyParams& policy, int x);
LogitTable mle_gradient(const Environment& env, double beta, const PolicyParams& policy, int x);
LogitTable calibration_term_gradient(const Environment& env, double beta, const PolicyParams& policy, int x);

struct Theorem2Report {
  std::vector<PopulationReport> rows;
  std::vector<double> optimal_to_reference_kl;  // per prompt
  int raw_violations = 0;        // rows with theorem2_gap_raw < -tolerance
  int corrected_violations = 0;  // rows with theorem2_gap_corrected < -tolerance
  double min_raw_gap = 0.0;
  double min_corrected_gap = 0.0;
  double tolerance = 1e-12;
};

// Reports, never asserts: the raw gap can be negative (see
// theorem2_counterexample in verify).
Theorem2Report theorem2_diagnostic(const Environment& env, double beta, const PolicyParams& policy);

// Soft weights (sigma((r_w - r_l)/beta), sigma((r_l - r_w)/beta)).
std::pair<double, double> estimate_weights(double beta, double reward_chosen, double reward_rejected);

// Two-sample estimate of the population loss on {y_w, y_l}; needs oracle rewards.
double empirical_population_estimate(const Environment& env, double beta, const PolicyParams& policy,
                                     const PreferencePair& pair);

// Training objective averaged over prompts: CAL_DPO -> first + calibration,
// BT -> first only.
LossValue population_objective(const LossSpec& spec, const PolicyParams& policy, const Environment& env);

}  // namespace prefcal

#endif  // PREFCAL_POPULATION_HPP
