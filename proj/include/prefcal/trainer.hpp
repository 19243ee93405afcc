#ifndef PREFCAL_TRAINER_HPP
#define PREFCAL_TRAINER_HPP

#include "prefcal/env.hpp"
#include "prefcal/losses.hpp"
#include "prefcal/prefdata.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefcal {

enum class BatchMode { full, minibatch };

struct BatchConfig {
  BatchMode mode = BatchMode::full;
  int size = 0;  // minibatch only
  std::uint64_t seed = 0;
};

enum class Objective { empirical, population };

enum class InitKind { zeros, copy_of_ref_logits, seeded_gaussian };

struct InitConfig {
  InitKind kind = InitKind::zeros;
  double scale = 1.0;  // seeded_gaussian only
  std::uint64_t seed = 0;
};

struct TrainConfig {
  LossSpec loss;
  int steps = 1;
  double learning_rate = 0.1;
  BatchConfig batch;
  Objective objective = Objective::empirical;
  int log_every = 1;
  std::optional<double> grad_clip;
  InitConfig init;

  void validate() const;
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double chosen_reward_mean = 0.0;
  double rejected_reward_mean = 0.0;
  double margin_mean = 0.0;
  double forward_kl_mean = 0.0;
  double reverse_kl_mean = 0.0;
};

inline constexpr const char* kTrainLogHeader =
    "step,loss,chosen_reward_mean,rejected_reward_mean,margin_mean,forward_kl_mean,reverse_kl_mean";

struct TrainLog {
  std::vector<TrainLogRow> rows;

  const TrainLogRow& final_row() const { return rows.back(); }
  std::string to_csv() const;
};

struct TrainResult {
  PolicyParams policy;
  TrainLog log;
};

// theta - lr * g, with g rescaled to norm grad_clip when its global L2 norm
// exceeds it.
PolicyParams gd_step(const PolicyParams& policy, const LogitTable& grad, double learning_rate,
                     std::optional<double> grad_clip = std::nullopt);

PolicyParams initial_policy(const InitConfig& init, const Environment& env, std::uint64_t run_seed = 0);

// Log statistics for one policy. Reward means are taken over the dataset
// pairs; without a dataset, over each prompt's best and worst response.
TrainLogRow log_row(int step, double loss, const PolicyParams& policy, const Environment& env,
                    const PreferenceDataset* dataset, double beta);

// Deterministic gradient descent. Logs step 0 (before any update), every
// log_every steps, and the final step. Throws DivergenceError on a
// non-finite loss.
TrainResult train(const TrainConfig& config, const Environment& env, const PreferenceDataset* dataset,
                  std::uint64_t seed);

struct SweepRow {
  double beta = 0.0;
  TrainLogRow final;
};

inline constexpr const char* kSweepHeader =
    "beta,step,loss,chosen_reward_mean,rejected_reward_mean,margin_mean,forward_kl_mean,reverse_kl_mean";

std::vector<SweepRow> beta_sweep(const TrainConfig& base, std::span<const double> betas,
                                 const Environment& env, const PreferenceDataset* dataset,
                                 std::uint64_t seed);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace prefcal

#endif  // PREFCAL_TRAINER_HPP
