#include "prefcal/prefdata.hpp"

#include "helpers.hpp"

#include <cmath>
#include <filesystem>

using namespace prefcal;
using testing::env1;
using testing::vec;

TEST_CASE("bt_probability") {
  CHECK(bt_probability(0.0) == 0.5);
  for (double z : {0.1, 1.0, 7.5, 30.0}) CHECK(std::abs(bt_probability(z) + bt_probability(-z) - 1.0) <= 1e-15);
  CHECK(bt_probability(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK_ERRC(bt_probability(NAN), Errc::invalid_input);
  CHECK_ERRC(bt_probability(INFINITY), Errc::invalid_input);
}

TEST_CASE("sampling is deterministic per seed") {
  const Environment env({vec({0.3, -0.1, 0.8}), vec({1.0, 0.0})}, {vec({0.0, 0.5, -0.5}), vec({0.0, 0.0})});
  const PreferenceDataset a = sample_dataset(env, 500, 42);
  const PreferenceDataset b = sample_dataset(env, 500, 42);
  CHECK(a == b);
  CHECK(to_ndjson(a) == to_ndjson(b));
  CHECK(!(sample_dataset(env, 500, 43) == a));
  check_dataset(a, env);
  CHECK(a.env_fingerprint == env.fingerprint());
  CHECK_ERRC(sample_dataset(env, 0, 1), Errc::invalid_input);
}

namespace {

// 3-sigma binomial bound around p.
bool within_binomial(double freq, double p, int n, double sigmas = 3.0) {
  return std::abs(freq - p) <= sigmas * std::sqrt(p * (1.0 - p) / n);
}

}  // namespace

TEST_CASE("bt labels follow the Bradley-Terry probability") {
  constexpr int n = 10000;
  SUBCASE("tied rewards") {
    const Environment env = env1({0.4, 0.4}, {0.0, 0.0});
    const PreferenceDataset d = sample_dataset(env, n, 7);
    int first = 0;
    for (const auto& p : d.pairs) first += p.chosen == 0;
    CHECK(within_binomial(static_cast<double>(first) / n, 0.5, n));
  }
  SUBCASE("reward gap 1") {
    const Environment env = env1({1.0, 0.0}, {0.0, 0.0});
    const PreferenceDataset d = sample_dataset(env, n, 8);
    int better = 0;
    for (const auto& p : d.pairs) better += p.chosen == 0;
    CHECK(within_binomial(static_cast<double>(better) / n, 0.7310585786300049, n));
  }
}

TEST_CASE("hard labels always prefer the higher reward") {
  const Environment env = env1({0.1, 0.9, -0.3, 0.5}, {0.0, 0.2, 0.1, -0.4});
  for (const auto& p : sample_dataset(env, 2000, 9, Labeling::hard).pairs) {
    CHECK(env.reward(0, p.chosen) > env.reward(0, p.rejected));
  }
}

TEST_CASE("responses are drawn from the reference policy") {
  // Inclusion probability of y in a pair whose second draw is resampled on
  // collision: pi(y) + sum_{a != y} pi(a) pi(y) / (1 - pi(a)).
  const Environment env = env1({0.0, 0.0, 0.0, 0.0}, {1.0, 0.0, -0.5, 0.3});
  const Eigen::VectorXd pi = env.ref_probs(0);
  constexpr int n = 20000;
  const PreferenceDataset d = sample_dataset(env, n, 10);
  for (int y = 0; y < 4; ++y) {
    double expected = pi[y];
    for (int a = 0; a < 4; ++a) {
      if (a != y) expected += pi[a] * pi[y] / (1.0 - pi[a]);
    }
    int hits = 0;
    for (const auto& p : d.pairs) hits += p.chosen == y || p.rejected == y;
    CHECK(within_binomial(static_cast<double>(hits) / n, expected, n, 4.0));
  }
}

TEST_CASE("oracle rewards") {
  const Environment env = env1({0.7, -0.2, 0.1}, {0.0, 0.0, 0.0});
  const PreferenceDataset d = sample_dataset(env, 50, 3);

  const PreferenceDataset conv = attach_oracle_rewards(d, env, OracleSource::convention);
  for (const auto& p : conv.pairs) {
    CHECK(*p.oracle_reward_chosen == 0.5);
    CHECK(*p.oracle_reward_rejected == -0.5);
  }
  CHECK(attach_oracle_rewards(conv, env, OracleSource::convention) == conv);

  const PreferenceDataset table = attach_oracle_rewards(d, env, OracleSource::environment);
  for (const auto& p : table.pairs) {
    CHECK(*p.oracle_reward_chosen == env.reward(0, p.chosen));
    CHECK(*p.oracle_reward_rejected == env.reward(0, p.rejected));
  }

  const Environment other = env1({0.7, -0.2, 0.2}, {0.0, 0.0, 0.0});
  CHECK_ERRC(attach_oracle_rewards(d, other, OracleSource::convention), Errc::dataset_mismatch);
  CHECK_ERRC(check_dataset(d, other), Errc::dataset_mismatch);
}

TEST_CASE("pair validation") {
  const Environment env = env1({0.7, -0.2, 0.1}, {0.0, 0.0, 0.0});
  CHECK_ERRC(check_pair(PreferencePair{0, 1, 1, {}, {}}, env), Errc::invalid_input);
  CHECK_ERRC(check_pair(PreferencePair{0, 1, 3, {}, {}}, env), Errc::invalid_input);
  CHECK_ERRC(check_pair(PreferencePair{1, 0, 1, {}, {}}, env), Errc::invalid_input);
  CHECK_ERRC(check_pair(PreferencePair{0, 0, 1, 0.5, {}}, env), Errc::invalid_input);

  PreferenceDataset empty;
  empty.env_fingerprint = env.fingerprint();
  CHECK_ERRC(check_dataset(empty, env), Errc::invalid_input);
}

TEST_CASE("NDJSON round trip") {
  const Environment env = env1({0.7, -0.2, 0.1}, {0.0, 0.3, 0.0});
  const PreferenceDataset d = attach_oracle_rewards(sample_dataset(env, 20, 5, Labeling::hard), env,
                                                    OracleSource::environment);
  CHECK(dataset_from_ndjson(to_ndjson(d)) == d);

  const PreferenceDataset plain = sample_dataset(env, 20, 5);
  CHECK(dataset_from_ndjson(to_ndjson(plain)) == plain);

  const auto dir = std::filesystem::temp_directory_path() / "prefcal_data_test";
  save_dataset(d, dir / "d.ndjson");
  CHECK(load_dataset(dir / "d.ndjson") == d);
  std::filesystem::remove_all(dir);

  CHECK_ERRC(dataset_from_ndjson(""), Errc::invalid_input);
  CHECK_ERRC(dataset_from_ndjson("{\"env_fingerprint\": 3}\n"), Errc::invalid_input);
  CHECK(labeling_from_string("hard") == Labeling::hard);
  CHECK_ERRC(labeling_from_string("soft"), Errc::configuration);
}
