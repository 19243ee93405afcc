#include "prefcal/prefdata.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/numeric.hpp"
#include "prefcal/rng.hpp"

#include <cmath>
#include <sstream>

namespace prefcal {

std::string_view to_string(Labeling labeling) {
  return labeling == Labeling::bt ? "bt" : "hard";
}

Labeling labeling_from_string(std::string_view name) {
  if (name == "bt") return Labeling::bt;
  if (name == "hard") return Labeling::hard;
  throw Error(Errc::configuration, "unknown labeling '" + std::string(name) + "' (expected bt or hard)");
}

double bt_probability(double reward_delta) {
  if (!std::isfinite(reward_delta)) throw Error(Errc::invalid_input, "non-finite reward difference");
  return numeric::sigmoid(reward_delta);
}

PreferenceDataset sample_dataset(const Environment& env, int n_pairs, std::uint64_t seed,
                                 Labeling labeling) {
  if (n_pairs < 1) throw Error(Errc::invalid_input, "n_pairs must be at least 1");
  for (int x = 0; x < env.num_prompts(); ++x) {
    if (env.num_responses(x) < 2) {
      throw Error(Errc::invalid_environment, "prompt " + std::to_string(x) + " has fewer than 2 responses");
    }
  }

  PreferenceDataset out;
  out.env_fingerprint = env.fingerprint();
  out.seed = seed;
  out.labeling = labeling;
  out.beta_label = labeling == Labeling::bt ? 1.0 : kHardLabelSentinel;
  out.pairs.reserve(static_cast<std::size_t>(n_pairs));

  Rng rng(seed);
  for (int i = 0; i < n_pairs; ++i) {
    const int x = rng.index(env.num_prompts());
    const Eigen::VectorXd& ref = env.ref_probs(x);
    const int a = rng.categorical(ref);
    int b = rng.categorical(ref);
    while (b == a) b = rng.categorical(ref);

    const double ra = env.reward(x, a);
    const double rb = env.reward(x, b);
    bool a_wins = false;
    if (labeling == Labeling::bt) {
      a_wins = rng.uniform() < bt_probability(ra - rb);
    } else {
      a_wins = ra > rb || (ra == rb && a < b);
    }
    PreferencePair pair;
    pair.prompt = x;
    pair.chosen = a_wins ? a : b;
    pair.rejected = a_wins ? b : a;
    out.pairs.push_back(pair);
  }
  return out;
}

PreferenceDataset attach_oracle_rewards(const PreferenceDataset& dataset, const Environment& env,
                                        OracleSource source) {
  if (dataset.env_fingerprint != env.fingerprint()) {
    throw Error(Errc::dataset_mismatch, "dataset fingerprint " + dataset.env_fingerprint +
                                            " does not match environment " + env.fingerprint());
  }
  PreferenceDataset out = dataset;
  for (auto& pair : out.pairs) {
    check_pair(pair, env);
    if (source == OracleSource::convention) {
      pair.oracle_reward_chosen = 0.5;
      pair.oracle_reward_rejected = -0.5;
    } else {
      pair.oracle_reward_chosen = env.reward(pair.prompt, pair.chosen);
      pair.oracle_reward_rejected = env.reward(pair.prompt, pair.rejected);
    }
  }
  return out;
}

void check_pair(const PreferencePair& pair, const Environment& env) {
  env.check_response(pair.prompt, pair.chosen);
  env.check_response(pair.prompt, pair.rejected);
  if (pair.chosen == pair.rejected) throw Error(Errc::invalid_input, "pair has chosen == rejected");
  if (pair.oracle_reward_chosen.has_value() != pair.oracle_reward_rejected.has_value()) {
    throw Error(Errc::invalid_input, "pair carries only one oracle reward");
  }
}

void check_dataset(const PreferenceDataset& dataset, const Environment& env) {
  if (dataset.pairs.empty()) throw Error(Errc::invalid_input, "empty preference dataset");
  if (dataset.env_fingerprint != env.fingerprint()) {
    throw Error(Errc::dataset_mismatch, "dataset fingerprint " + dataset.env_fingerprint +
                                            " does not match environment " + env.fingerprint());
  }
  for (const auto& pair : dataset.pairs) check_pair(pair, env);
}

std::string to_ndjson(const PreferenceDataset& dataset) {
  std::ostringstream out;
  const nlohmann::json header = {
      {"env_fingerprint", dataset.env_fingerprint},
      {"seed", dataset.seed},
      {"labeling", to_string(dataset.labeling)},
      {"beta_label", dataset.beta_label},
  };
  out << header.dump() << '\n';
  for (const auto& p : dataset.pairs) {
    nlohmann::json rec = {{"x", p.prompt}, {"yw", p.chosen}, {"yl", p.rejected}};
    rec["rw"] = p.oracle_reward_chosen ? nlohmann::json(*p.oracle_reward_chosen) : nlohmann::json(nullptr);
    rec["rl"] = p.oracle_reward_rejected ? nlohmann::json(*p.oracle_reward_rejected) : nlohmann::json(nullptr);
    out << rec.dump() << '\n';
  }
  return out.str();
}

PreferenceDataset dataset_from_ndjson(std::string_view text) {
  PreferenceDataset out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  int lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      if (!have_header) {
        out.env_fingerprint = rec.at("env_fingerprint").get<std::string>();
        out.seed = rec.at("seed").get<std::uint64_t>();
        out.labeling = labeling_from_string(rec.at("labeling").get<std::string>());
        out.beta_label = rec.value("beta_label", out.labeling == Labeling::bt ? 1.0 : kHardLabelSentinel);
        have_header = true;
        continue;
      }
      PreferencePair p;
      p.prompt = rec.at("x").get<int>();
      p.chosen = rec.at("yw").get<int>();
      p.rejected = rec.at("yl").get<int>();
      if (rec.contains("rw") && !rec["rw"].is_null()) p.oracle_reward_chosen = rec["rw"].get<double>();
      if (rec.contains("rl") && !rec["rl"].is_null()) p.oracle_reward_rejected = rec["rl"].get<double>();
      out.pairs.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_input, "dataset line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!have_header) throw Error(Errc::invalid_input, "dataset has no header record");
  return out;
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_ndjson(io::read_file(path));
}

void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_ndjson(dataset));
}

}  // namespace prefcal
