#ifndef PREFCAL_PREFDATA_HPP
#define PREFCAL_PREFDATA_HPP

#include "prefcal/env.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefcal {

struct PreferencePair {
  int prompt = 0;
  int chosen = 0;
  int rejected = 1;
  std::optional<double> oracle_reward_chosen;
  std::optional<double> oracle_reward_rejected;

  bool has_oracle_rewards() const {
    return oracle_reward_chosen.has_value() && oracle_reward_rejected.has_value();
  }
  bool operator==(const PreferencePair&) const = default;
};

enum class Labeling { bt, hard };

std::string_view to_string(Labeling labeling);
Labeling labeling_from_string(std::string_view name);

// beta_label written for hard labels, where no temperature applies.
inline constexpr double kHardLabelSentinel = 0.0;

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  std::string env_fingerprint;
  std::uint64_t seed = 0;
  Labeling labeling = Labeling::bt;
  double beta_label = 1.0;

  bool operator==(const PreferenceDataset&) const = default;
};

// sigma(delta), the Bradley-Terry win probability.
double bt_probability(double reward_delta);

// Draws n_pairs i.i.d. records: prompt uniform, two distinct responses from
// pi_ref (second one rejection-resampled on collision), then labels them.
PreferenceDataset sample_dataset(const Environment& env, int n_pairs, std::uint64_t seed,
                                 Labeling labeling = Labeling::bt);

enum class OracleSource {
  environment,  // read r(x, y) from the reward table
  convention,   // +1/2 for the chosen response, -1/2 for the rejected one
};

PreferenceDataset attach_oracle_rewards(const PreferenceDataset& dataset, const Environment& env,
                                        OracleSource source);

void check_pair(const PreferencePair& pair, const Environment& env);
// Checks the fingerprint, non-emptiness and every pair.
void check_dataset(const PreferenceDataset& dataset, const Environment& env);

// Newline-delimited JSON: a header record, then one {x, yw, yl, rw, rl} per line.
std::string to_ndjson(const PreferenceDataset& dataset);
PreferenceDataset dataset_from_ndjson(std::string_view text);
PreferenceDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path);

}  // namespace prefcal

#endif  // PREFCAL_PREFDATA_HPP
