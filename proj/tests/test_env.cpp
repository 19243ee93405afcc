#include "prefcal/env.hpp"

#include "prefcal/io.hpp"

#include "helpers.hpp"

#include <cmath>
#include <filesystem>

using namespace prefcal;
using testing::env1;
using testing::policy1;
using testing::vec;

TEST_CASE("checked softmax") {
  auto p = softmax(vec({0.0, 0.0})).probs;
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);

  p = softmax(vec({std::log(2.0), 0.0})).probs;
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  p = softmax(vec({1.0, 2.0, 3.0})).probs;
  CHECK(p[0] == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.24472847105479765).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.6652409557748219).epsilon(1e-14));
  CHECK(std::abs(p.sum() - 1.0) <= 1e-12);

  p = softmax(vec({1000.0, -1000.0, 999.0})).probs;
  CHECK(p.allFinite());
  CHECK(std::abs(p.sum() - 1.0) <= 1e-12);

  CHECK_ERRC(softmax(vec({0.0, NAN})), Errc::invalid_input);
  CHECK_ERRC(softmax(vec({INFINITY, 0.0})), Errc::invalid_input);
}

TEST_CASE("environment validation") {
  CHECK_ERRC(Environment({}, {}), Errc::invalid_environment);
  CHECK_ERRC(env1({1.0}, {0.0}), Errc::invalid_environment);
  CHECK_ERRC(env1({1.0, NAN}, {0.0, 0.0}), Errc::invalid_environment);
  CHECK_ERRC(env1({1.0, 0.0}, {0.0, 0.0, 0.0}), Errc::invalid_environment);
  // pi_ref below the floor
  CHECK_ERRC(env1({0.0, 0.0}, {0.0, -40.0}), Errc::invalid_environment);

  // ragged response counts are allowed
  Environment env({vec({0.0, 1.0}), vec({0.0, 1.0, 2.0})}, {vec({0.0, 0.0}), vec({0.0, 0.0, 0.0})});
  CHECK(env.num_responses(0) == 2);
  CHECK(env.num_responses(1) == 3);
  CHECK_ERRC(env.reward(2, 0), Errc::invalid_input);
  CHECK_ERRC(env.reward(0, 2), Errc::invalid_input);
}

TEST_CASE("implicit reward") {
  const Environment env = env1({0.0, 0.0}, {std::log(0.4), std::log(0.6)});
  const PolicyParams same = PolicyParams::copy_of_ref(env);
  CHECK(std::abs(implicit_reward(same, env, 0, 0)) <= 1e-15);

  const PolicyParams p = policy1({std::log(0.8), std::log(0.2)});
  CHECK(implicit_reward(p, env, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const Environment env2 = env1({0.0, 0.0}, {std::log(0.6), std::log(0.4)});
  const PolicyParams p2 = policy1({std::log(0.3), std::log(0.7)});
  CHECK(implicit_reward(p2, env2, 0, 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  CHECK_ERRC(implicit_reward(p, env, 0, 2), Errc::invalid_input);
  CHECK_ERRC(implicit_reward(p, env, 1, 0), Errc::invalid_input);
}

TEST_CASE("preference score") {
  const Environment env = env1({0.0, 0.0, 0.0}, {0.1, -0.3, 0.2});
  CHECK(preference_score(PolicyParams::copy_of_ref(env), env, 0, 0, 1) == doctest::Approx(0.0));

  // log pi - log pi_ref = [0.7, -0.2] up to a shared constant that cancels
  const Environment two = env1({0.0, 0.0}, {0.0, 0.0});
  const PolicyParams p = policy1({0.7, -0.2});
  CHECK(preference_score(p, two, 0, 0, 1) == doctest::Approx(0.9).epsilon(1e-14));

  // second code path: raw log-probabilities
  const PolicyParams q = policy1({0.3, -1.1, 0.4});
  const Eigen::VectorXd lp = (q.logits[0].array() - std::log(q.logits[0].array().exp().sum())).matrix();
  const Eigen::VectorXd lr = (env.ref_logits(0).array() - std::log(env.ref_logits(0).array().exp().sum())).matrix();
  CHECK(preference_score(q, env, 0, 2, 1) == doctest::Approx((lp[2] - lr[2]) - (lp[1] - lr[1])).epsilon(1e-13));

  CHECK_ERRC(preference_score(p, two, 0, 1, 1), Errc::invalid_input);
}

TEST_CASE("optimal policy") {
  const Environment constant = env1({2.0, 2.0, 2.0}, {0.5, 0.0, -1.0});
  const Eigen::VectorXd opt = optimal_policy(constant, 0.3, 0).probs;
  CHECK((opt - constant.ref_probs(0)).cwiseAbs().maxCoeff() <= 1e-12);

  const Environment bin = env1({1.0, 0.0}, {0.0, 0.0});
  const Eigen::VectorXd p = optimal_policy(bin, 1.0, 0).probs;
  CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-14));

  const Environment env = env1({1.0, -0.5, 0.3}, {0.2, 0.0, -0.7});
  const Eigen::VectorXd big = optimal_policy(env, 1e6, 0).probs;
  CHECK(0.5 * (big - env.ref_probs(0)).cwiseAbs().sum() < 1e-5);

  // overflow-free at r / beta = +-500
  const Environment extreme = env1({0.5, -0.5}, {0.0, 0.0});
  const Eigen::VectorXd e = optimal_policy(extreme, 1e-3, 0).probs;
  CHECK(e.allFinite());
  CHECK(std::abs(e.sum() - 1.0) <= 1e-12);
  CHECK((e.array() > 0.0).all());

  CHECK_ERRC(optimal_policy(env, 0.0, 0), Errc::invalid_parameter);
  CHECK_ERRC(optimal_policy(env, -1.0, 0), Errc::invalid_parameter);
}

TEST_CASE("log partition") {
  const Environment zero = env1({0.0, 0.0}, {0.3, -0.2});
  CHECK(log_partition(zero, 0.7, 0) == doctest::Approx(0.0));

  const Environment bin = env1({1.0, 0.0}, {0.0, 0.0});
  CHECK(log_partition(bin, 1.0, 0) == doctest::Approx(0.6201145069582775).epsilon(1e-14));

  const Environment c = env1({3.0, 3.0, 3.0}, {0.3, -0.2, 1.0});
  CHECK(log_partition(c, 0.25, 0) == doctest::Approx(12.0).epsilon(1e-14));

  CHECK_ERRC(log_partition(c, 0.0, 0), Errc::invalid_parameter);
}

TEST_CASE("reward shift invariance") {
  const Environment env = env1({1.0, -0.5, 0.3, 0.0}, {0.2, 0.0, -0.7, 0.4});
  const double beta = 0.37;
  const double c = 2.5;
  const Environment shifted = env.with_rewards({(env.reward(0).array() + c).matrix()});
  CHECK((optimal_policy(env, beta, 0).probs - optimal_policy(shifted, beta, 0).probs).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(log_partition(shifted, beta, 0) - log_partition(env, beta, 0) - c / beta) <= 1e-10);
}

TEST_CASE("unit partition shift") {
  const Environment env({vec({1.0, -0.5, 0.3}), vec({0.1, 0.2})}, {vec({0.2, 0.0, -0.7}), vec({0.0, 1.0})});
  const Environment unit = env.with_unit_partition(0.4);
  for (int x = 0; x < unit.num_prompts(); ++x) CHECK(std::abs(log_partition(unit, 0.4, x)) <= 1e-12);
}

TEST_CASE("environment JSON round trip and fingerprint") {
  const Environment env({vec({1.0, -0.5, 0.3}), vec({0.1, 0.2})}, {vec({0.2, 0.0, -0.7}), vec({0.0, 1.0})});
  const Environment back = environment_from_json(to_json(env));
  CHECK(back.fingerprint() == env.fingerprint());
  CHECK(back.reward(0, 1) == env.reward(0, 1));

  const Environment other = env.with_rewards({vec({1.0, -0.5, 0.3}), vec({0.1, 0.25})});
  CHECK(other.fingerprint() != env.fingerprint());

  const auto dir = std::filesystem::temp_directory_path() / "prefcal_env_test";
  save_environment(env, dir / "env.json");
  const std::string first = io::read_file(dir / "env.json");
  save_environment(load_environment(dir / "env.json"), dir / "env.json");
  CHECK(io::read_file(dir / "env.json") == first);
  std::filesystem::remove_all(dir);

  CHECK_ERRC(environment_from_json(nlohmann::json{{"reward", 3}}), Errc::invalid_environment);
  CHECK_ERRC(load_environment("/nonexistent/prefcal/env.json"), Errc::io);
}
