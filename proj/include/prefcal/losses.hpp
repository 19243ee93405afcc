#ifndef PREFCAL_LOSSES_HPP
#define PREFCAL_LOSSES_HPP

// Pairwise preference losses over implicit rewards r_hat = log(pi/pi_ref),
// with h = r_hat(y_w) - r_hat(y_l):
//
//   DPO   -log sigma(beta h)
//   BT    -log sigma(h)
//   IPO   (h - 1/(2 beta))^2
//   SLIC  max(0, 1 - beta h)
//
// and the calibrated family, which adds (r_hat(y_w) - t_w)^2 + (r_hat(y_l) - t_l)^2
// to a base term: CAL_DPO uses BT (no beta), CAL_IPO uses IPO, CAL_SLIC uses
// SLIC. Targets default to +-1/(2 beta), or r/beta when a pair carries oracle
// rewards.
//
// Gradients are taken with respect to the policy logits. Since
// d r_hat(y) / d theta_j = [y == j] - pi_j, every per-pair gradient is
//   g = a e_w + b e_l - (a + b) pi
// where a, b are the loss derivatives with respect to the two implicit rewards.

#include "prefcal/env.hpp"
#include "prefcal/prefdata.hpp"

#include <array>
#include <optional>
#include <span>
#include <string_view>

namespace prefcal {

enum class Method { DPO, BT, IPO, SLIC, CAL_DPO, CAL_IPO, CAL_SLIC };

inline constexpr std::array<Method, 7> kAllMethods = {
    Method::DPO, Method::BT, Method::IPO, Method::SLIC,
    Method::CAL_DPO, Method::CAL_IPO, Method::CAL_SLIC};

inline constexpr double kDefaultBeta = 1e-3;
inline constexpr std::array<double, 5> kDefaultBetaGrid = {1e-3, 2e-3, 3e-3, 1e-2, 1e-1};

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);
bool is_calibrated(Method method);

struct LossSpec {
  Method method = Method::CAL_DPO;
  double beta = kDefaultBeta;
  // Unset means the default +-1/(2 beta), overridden per pair by oracle rewards.
  std::optional<double> target_chosen;
  std::optional<double> target_rejected;

  double chosen_target() const { return target_chosen.value_or(0.5 / beta); }
  double rejected_target() const { return target_rejected.value_or(-0.5 / beta); }
  bool default_targets() const { return !target_chosen && !target_rejected; }

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  LogitTable grad;
};

LossValue pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                    const PreferencePair& pair);

LossValue calibration_loss(const PolicyParams& policy, const Environment& env, int x, int y,
                           double target);

LossValue cal_pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                        const PreferencePair& pair);

// Dispatches to pair_loss or cal_pair_loss by method.
LossValue any_pair_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                        const PreferencePair& pair);

// Mean over the pairs, reduced in order with compensated summation.
LossValue batch_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                     const PreferenceDataset& dataset);
LossValue batch_loss(const LossSpec& spec, const PolicyParams& policy, const Environment& env,
                     std::span<const PreferencePair> pairs);

namespace detail {

// Loss value and its derivatives with respect to r_hat(y_w) and r_hat(y_l).
struct PairTerms {
  double value = 0.0;
  double d_chosen = 0.0;
  double d_rejected = 0.0;
};

PairTerms pair_terms(const LossSpec& spec, const PreferencePair& pair, double reward_chosen,
                     double reward_rejected);

}  // namespace detail

}  // namespace prefcal

#endif  // PREFCAL_LOSSES_HPP
