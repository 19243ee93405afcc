#include "prefcal/trainer.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/numeric.hpp"
#include "prefcal/population.hpp"
#include "prefcal/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace prefcal {

void TrainConfig::validate() const {
  loss.validate();
  if (steps < 1) throw Error(Errc::configuration, "steps must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::configuration, "learning_rate must be a non-negative finite number");
  }
  if (log_every < 1) throw Error(Errc::configuration, "log_every must be at least 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw Error(Errc::configuration, "grad_clip must be positive");
  if (batch.mode == BatchMode::minibatch && batch.size < 1) {
    throw Error(Errc::configuration, "minibatch size must be at least 1");
  }
  if (init.kind == InitKind::seeded_gaussian && !(init.scale >= 0.0)) {
    throw Error(Errc::configuration, "gaussian init scale must be non-negative");
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << kTrainLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << io::format_double(r.loss) << ',' << io::format_double(r.chosen_reward_mean) << ','
        << io::format_double(r.rejected_reward_mean) << ',' << io::format_double(r.margin_mean) << ','
        << io::format_double(r.forward_kl_mean) << ',' << io::format_double(r.reverse_kl_mean) << '\n';
  }
  return out.str();
}

PolicyParams gd_step(const PolicyParams& policy, const LogitTable& grad, double learning_rate,
                     std::optional<double> grad_clip) {
  if (grad.size() != policy.logits.size()) throw Error(Errc::invalid_input, "gradient shape mismatch");
  double sq = 0.0;
  for (std::size_t x = 0; x < grad.size(); ++x) {
    if (grad[x].size() != policy.logits[x].size()) throw Error(Errc::invalid_input, "gradient shape mismatch");
    sq += grad[x].squaredNorm();
  }
  double scale = learning_rate;
  const double norm = std::sqrt(sq);
  if (grad_clip && norm > *grad_clip) scale *= *grad_clip / norm;

  PolicyParams next = policy;
  for (std::size_t x = 0; x < grad.size(); ++x) next.logits[x] -= scale * grad[x];
  return next;
}

PolicyParams initial_policy(const InitConfig& init, const Environment& env, std::uint64_t run_seed) {
  switch (init.kind) {
    case InitKind::zeros:
      return PolicyParams::zeros_like(env);
    case InitKind::copy_of_ref_logits:
      return PolicyParams::copy_of_ref(env);
    case InitKind::seeded_gaussian: {
      Rng rng(mix_seed(init.seed, run_seed));
      PolicyParams p = PolicyParams::zeros_like(env);
      for (auto& row : p.logits) {
        for (Eigen::Index i = 0; i < row.size(); ++i) row[i] = init.scale * rng.gaussian();
      }
      return p;
    }
  }
  return PolicyParams::zeros_like(env);
}

TrainLogRow log_row(int step, double loss, const PolicyParams& policy, const Environment& env,
                    const PreferenceDataset* dataset, double beta) {
  TrainLogRow row;
  row.step = step;
  row.loss = loss;

  LogitTable r_hat;
  for (int x = 0; x < env.num_prompts(); ++x) r_hat.push_back(implicit_rewards(policy, env, x));

  numeric::CompensatedSum<double> chosen, rejected, margin;
  double n = 0.0;
  if (dataset != nullptr) {
    for (const auto& p : dataset->pairs) {
      const auto& r = r_hat[static_cast<std::size_t>(p.prompt)];
      chosen.add(r[p.chosen]);
      rejected.add(r[p.rejected]);
      margin.add(r[p.chosen] - r[p.rejected]);
    }
    n = static_cast<double>(dataset->pairs.size());
  } else {
    for (int x = 0; x < env.num_prompts(); ++x) {
      Eigen::Index best = 0, worst = 0;
      env.reward(x).maxCoeff(&best);
      env.reward(x).minCoeff(&worst);
      const auto& r = r_hat[static_cast<std::size_t>(x)];
      chosen.add(r[best]);
      rejected.add(r[worst]);
      margin.add(r[best] - r[worst]);
    }
    n = static_cast<double>(env.num_prompts());
  }
  row.chosen_reward_mean = chosen.value() / n;
  row.rejected_reward_mean = rejected.value() / n;
  row.margin_mean = margin.value() / n;

  numeric::CompensatedSum<double> fwd, rev;
  for (int x = 0; x < env.num_prompts(); ++x) {
    fwd.add(forward_kl(env, beta, policy, x));
    rev.add(reverse_kl(env, beta, policy, x));
  }
  row.forward_kl_mean = fwd.value() / env.num_prompts();
  row.reverse_kl_mean = rev.value() / env.num_prompts();
  return row;
}

namespace {

class StepObjective {
 public:
  StepObjective(const TrainConfig& config, const Environment& env, const PreferenceDataset* dataset,
                std::uint64_t seed)
      : config_(config), env_(env), dataset_(dataset), rng_(mix_seed(config.batch.seed, seed)) {
    if (dataset_ != nullptr && dataset_->pairs.size() > 0) {
      order_.resize(dataset_->pairs.size());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
    }
  }

  // Loss and gradient used for the update at this step.
  LossValue step_loss(const PolicyParams& policy) {
    if (config_.objective == Objective::population) return population_objective(config_.loss, policy, env_);
    if (config_.batch.mode == BatchMode::full) {
      return batch_loss(config_.loss, policy, env_, std::span<const PreferencePair>(dataset_->pairs));
    }
    // partial Fisher-Yates draw without replacement
    const std::size_t n = order_.size();
    const std::size_t k = std::min(n, static_cast<std::size_t>(config_.batch.size));
    batch_.clear();
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.index(static_cast<int>(n - i)));
      std::swap(order_[i], order_[j]);
      batch_.push_back(dataset_->pairs[order_[i]]);
    }
    return batch_loss(config_.loss, policy, env_, std::span<const PreferencePair>(batch_));
  }

  // Full objective value, for logging.
  double full_value(const PolicyParams& policy) const {
    if (config_.objective == Objective::population) return population_objective(config_.loss, policy, env_).value;
    return batch_loss(config_.loss, policy, env_, std::span<const PreferencePair>(dataset_->pairs)).value;
  }

 private:
  const TrainConfig& config_;
  const Environment& env_;
  const PreferenceDataset* dataset_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::vector<PreferencePair> batch_;
};

void check_finite(double loss, int step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(step, "non-finite loss at step " + std::to_string(step));
  }
}

void check_finite(const PolicyParams& policy, int step) {
  for (const auto& row : policy.logits) {
    if (!row.allFinite()) throw DivergenceError(step, "non-finite logits at step " + std::to_string(step));
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Environment& env, const PreferenceDataset* dataset,
                  std::uint64_t seed) {
  config.validate();
  if (config.objective == Objective::empirical) {
    if (dataset == nullptr) throw Error(Errc::configuration, "empirical objective requires a dataset");
    check_dataset(*dataset, env);
  }

  StepObjective objective(config, env, dataset, seed);
  TrainResult result{initial_policy(config.init, env, seed), {}};
  const bool full_batch = config.objective == Objective::population || config.batch.mode == BatchMode::full;

  for (int step = 0; step < config.steps; ++step) {
    LossValue lv = objective.step_loss(result.policy);
    check_finite(lv.value, step);
    if (step % config.log_every == 0) {
      const double logged = full_batch ? lv.value : objective.full_value(result.policy);
      check_finite(logged, step);
      result.log.rows.push_back(log_row(step, logged, result.policy, env, dataset, config.loss.beta));
    }
    result.policy = gd_step(result.policy, lv.grad, config.learning_rate, config.grad_clip);
    check_finite(result.policy, step + 1);
  }

  const double final_loss = objective.full_value(result.policy);
  check_finite(final_loss, config.steps);
  result.log.rows.push_back(log_row(config.steps, final_loss, result.policy, env, dataset, config.loss.beta));
  return result;
}

std::vector<SweepRow> beta_sweep(const TrainConfig& base, std::span<const double> betas,
                                 const Environment& env, const PreferenceDataset* dataset,
                                 std::uint64_t seed) {
  if (betas.empty()) throw Error(Errc::configuration, "beta sweep needs at least one beta");
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    TrainConfig cfg = base;
    cfg.loss.beta = beta;
    try {
      check_beta(beta);
      TrainResult r = train(cfg, env, dataset, seed);
      rows.push_back({beta, r.log.final_row()});
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.step(), std::string(e.what()) + " (beta=" + io::format_double(beta) + ")");
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (beta=" + io::format_double(beta) + ")");
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepHeader << '\n';
  for (const auto& s : rows) {
    const auto& r = s.final;
    out << io::format_double(s.beta) << ',' << r.step << ',' << io::format_double(r.loss) << ','
        << io::format_double(r.chosen_reward_mean) << ',' << io::format_double(r.rejected_reward_mean) << ','
        << io::format_double(r.margin_mean) << ',' << io::format_double(r.forward_kl_mean) << ','
        << io::format_double(r.reverse_kl_mean) << '\n';
  }
  return out.str();
}

}  // namespace prefcal
