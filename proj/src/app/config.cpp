#include "prefcal/app.hpp"

#include "prefcal/error.hpp"
#include "prefcal/io.hpp"
#include "prefcal/rng.hpp"

#include <cmath>

namespace prefcal::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::configuration, what); }

const json& require(const json& doc, const char* key, const std::string& where) {
  if (!doc.is_object() || !doc.contains(key)) bad(where + ": missing field '" + key + "'");
  return doc.at(key);
}

template <class T>
T get_or(const json& doc, const char* key, T fallback, const std::string& where) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    bad(where + ": field '" + key + "' has the wrong type");
  }
}

std::uint64_t seed_or(const json& doc, const char* key, std::uint64_t fallback, const std::string& where) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  const json& v = doc.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    bad(where + ": '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string kind_of(const json& doc, const std::string& where) {
  if (doc.is_string()) return doc.get<std::string>();
  return get_or<std::string>(doc, "kind", "", where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

json loss_to_json(const LossSpec& s) {
  json j = {{"method", std::string(to_string(s.method))}, {"beta", s.beta}};
  if (s.target_chosen) j["target_chosen"] = *s.target_chosen;
  if (s.target_rejected) j["target_rejected"] = *s.target_rejected;
  return j;
}

LossSpec loss_from_json(const json& doc) {
  const std::string where = "train.loss";
  LossSpec s;
  try {
    s.method = method_from_string(get_or<std::string>(doc, "method", "CAL_DPO", where));
  } catch (const Error& e) {
    bad(e.what());
  }
  s.beta = get_or<double>(doc, "beta", kDefaultBeta, where);
  if (doc.contains("target_chosen")) s.target_chosen = get_or<double>(doc, "target_chosen", 0.0, where);
  if (doc.contains("target_rejected")) s.target_rejected = get_or<double>(doc, "target_rejected", 0.0, where);
  return s;
}

json train_to_json(const TrainConfig& t) {
  json batch = {{"mode", t.batch.mode == BatchMode::full ? "full" : "minibatch"}};
  if (t.batch.mode == BatchMode::minibatch) {
    batch["size"] = t.batch.size;
    batch["seed"] = t.batch.seed;
  }
  json init;
  switch (t.init.kind) {
    case InitKind::zeros: init = {{"kind", "zeros"}}; break;
    case InitKind::copy_of_ref_logits: init = {{"kind", "copy_of_ref_logits"}}; break;
    case InitKind::seeded_gaussian:
      init = {{"kind", "seeded_gaussian"}, {"scale", t.init.scale}, {"seed", t.init.seed}};
      break;
  }
  return {{"loss", loss_to_json(t.loss)},
          {"steps", t.steps},
          {"learning_rate", t.learning_rate},
          {"batch", batch},
          {"objective", t.objective == Objective::empirical ? "empirical" : "population"},
          {"log_every", t.log_every},
          {"grad_clip", t.grad_clip ? json(*t.grad_clip) : json(nullptr)},
          {"init", init}};
}

TrainConfig train_from_json(const json& doc) {
  const std::string where = "train";
  TrainConfig t;
  if (doc.contains("loss")) t.loss = loss_from_json(doc.at("loss"));
  t.steps = get_or<int>(doc, "steps", t.steps, where);
  t.learning_rate = get_or<double>(doc, "learning_rate", t.learning_rate, where);
  t.log_every = get_or<int>(doc, "log_every", t.log_every, where);
  if (doc.contains("grad_clip") && !doc.at("grad_clip").is_null()) {
    t.grad_clip = get_or<double>(doc, "grad_clip", 0.0, where);
  }

  const std::string objective = get_or<std::string>(doc, "objective", "empirical", where);
  if (objective == "empirical") t.objective = Objective::empirical;
  else if (objective == "population") t.objective = Objective::population;
  else bad("train.objective must be 'empirical' or 'population'");

  if (doc.contains("batch")) {
    const json& b = doc.at("batch");
    const std::string mode = kind_of(b.is_object() && b.contains("mode") ? b.at("mode") : b, "train.batch");
    if (mode == "full") {
      t.batch.mode = BatchMode::full;
    } else if (mode == "minibatch") {
      t.batch.mode = BatchMode::minibatch;
      t.batch.size = get_or<int>(b, "size", 0, "train.batch");
      t.batch.seed = seed_or(b, "seed", 0, "train.batch");
    } else {
      bad("train.batch.mode must be 'full' or 'minibatch'");
    }
  }

  if (doc.contains("init")) {
    const json& i = doc.at("init");
    const std::string kind = kind_of(i, "train.init");
    if (kind == "zeros") {
      t.init.kind = InitKind::zeros;
    } else if (kind == "copy_of_ref_logits") {
      t.init.kind = InitKind::copy_of_ref_logits;
    } else if (kind == "seeded_gaussian") {
      t.init.kind = InitKind::seeded_gaussian;
      t.init.scale = get_or<double>(i, "scale", 1.0, "train.init");
      t.init.seed = seed_or(i, "seed", 0, "train.init");
    } else {
      bad("train.init.kind must be one of zeros, copy_of_ref_logits, seeded_gaussian");
    }
  }
  return t;
}

std::string_view to_string(OracleMode m) {
  switch (m) {
    case OracleMode::none: return "none";
    case OracleMode::environment: return "environment";
    case OracleMode::convention: return "convention";
  }
  return "none";
}

OracleMode oracle_from_string(const std::string& name) {
  if (name == "none") return OracleMode::none;
  if (name == "environment") return OracleMode::environment;
  if (name == "convention") return OracleMode::convention;
  bad("dataset.oracle must be none, environment or convention");
}

}  // namespace

void EnvGenSpec::validate() const {
  if (prompts < 1) throw Error(Errc::configuration, "environment needs at least 1 prompt");
  if (responses < 2) throw Error(Errc::configuration, "environment needs at least 2 responses per prompt");
  if (reward_law == RewardLaw::gaussian && !(reward_scale >= 0.0 && std::isfinite(reward_scale))) {
    throw Error(Errc::configuration, "reward scale must be a non-negative finite number");
  }
  if (reward_law == RewardLaw::bimodal && !std::isfinite(gap)) {
    throw Error(Errc::configuration, "bimodal gap must be finite");
  }
  if (reward_law == RewardLaw::table && !table) throw Error(Errc::configuration, "table reward law needs a table");
  if (ref_law == RefLaw::gaussian_logits && !(ref_scale >= 0.0 && std::isfinite(ref_scale))) {
    throw Error(Errc::configuration, "reference logit scale must be a non-negative finite number");
  }
}

Environment generate_environment(const EnvGenSpec& spec) {
  spec.validate();
  LogitTable reward;
  if (spec.reward_law == RewardLaw::table) {
    reward = *spec.table;
  } else {
    Rng rng(spec.reward_seed);
    for (int x = 0; x < spec.prompts; ++x) {
      Eigen::VectorXd r(spec.responses);
      if (spec.reward_law == RewardLaw::gaussian) {
        for (int y = 0; y < spec.responses; ++y) r[y] = spec.reward_scale * rng.gaussian();
      } else {
        for (int y = 0; y < spec.responses; ++y) r[y] = spec.gap * (rng.uniform() - 0.5);
        const int a = rng.index(spec.responses);
        int b = rng.index(spec.responses - 1);
        if (b >= a) ++b;
        r[a] = spec.gap;
        r[b] = spec.gap;
      }
      reward.push_back(std::move(r));
    }
  }

  LogitTable ref;
  Rng ref_rng(spec.ref_seed);
  for (const auto& r : reward) {
    Eigen::VectorXd l = Eigen::VectorXd::Zero(r.size());
    if (spec.ref_law == RefLaw::gaussian_logits) {
      for (Eigen::Index y = 0; y < l.size(); ++y) l[y] = spec.ref_scale * ref_rng.gaussian();
    }
    ref.push_back(std::move(l));
  }
  try {
    return Environment(std::move(reward), std::move(ref));
  } catch (const Error& e) {
    throw Error(Errc::configuration, e.what());
  }
}

EnvGenSpec env_gen_spec_from_json(const json& doc) {
  const std::string where = "environment.generate";
  if (!doc.is_object()) bad(where + " must be an object");
  EnvGenSpec s;
  s.prompts = get_or<int>(doc, "prompts", s.prompts, where);
  s.responses = get_or<int>(doc, "responses", s.responses, where);

  const json& rl = require(doc, "reward_law", where);
  const std::string kind = kind_of(rl, where + ".reward_law");
  if (kind == "gaussian") {
    s.reward_law = RewardLaw::gaussian;
    s.reward_scale = get_or<double>(rl, "scale", 1.0, where);
    s.reward_seed = seed_or(rl, "seed", kDefaultSeed, where);
  } else if (kind == "bimodal") {
    s.reward_law = RewardLaw::bimodal;
    s.gap = get_or<double>(rl, "gap", 1.0, where);
    s.reward_seed = seed_or(rl, "seed", kDefaultSeed, where);
  } else if (kind == "table") {
    s.reward_law = RewardLaw::table;
    try {
      s.table = logit_table_from_json(require(rl, "table", where + ".reward_law"));
    } catch (const Error& e) {
      bad(e.what());
    }
    s.prompts = static_cast<int>(s.table->size());
    s.responses = s.table->empty() ? 0 : static_cast<int>(s.table->front().size());
  } else {
    bad(where + ".reward_law.kind must be gaussian, bimodal or table");
  }

  if (doc.contains("ref_law")) {
    const json& fl = doc.at("ref_law");
    const std::string ref_kind = kind_of(fl, where + ".ref_law");
    if (ref_kind == "uniform") {
      s.ref_law = RefLaw::uniform;
    } else if (ref_kind == "gaussian_logits") {
      s.ref_law = RefLaw::gaussian_logits;
      s.ref_scale = get_or<double>(fl, "scale", 1.0, where);
      s.ref_seed = seed_or(fl, "seed", kDefaultSeed, where);
    } else {
      bad(where + ".ref_law.kind must be uniform or gaussian_logits");
    }
  }
  s.validate();
  return s;
}

json to_json(const EnvGenSpec& s) {
  json reward_law;
  switch (s.reward_law) {
    case RewardLaw::gaussian:
      reward_law = {{"kind", "gaussian"}, {"scale", s.reward_scale}, {"seed", s.reward_seed}};
      break;
    case RewardLaw::bimodal:
      reward_law = {{"kind", "bimodal"}, {"gap", s.gap}, {"seed", s.reward_seed}};
      break;
    case RewardLaw::table:
      reward_law = {{"kind", "table"}, {"table", prefcal::to_json(*s.table)}};
      break;
  }
  json ref_law = s.ref_law == RefLaw::uniform
                     ? json{{"kind", "uniform"}}
                     : json{{"kind", "gaussian_logits"}, {"scale", s.ref_scale}, {"seed", s.ref_seed}};
  return {{"prompts", s.prompts}, {"responses", s.responses}, {"reward_law", reward_law}, {"ref_law", ref_law}};
}

void DatasetSpec::validate() const {
  if (n_pairs < 1) throw Error(Errc::configuration, "dataset needs at least 1 pair");
}

PreferenceDataset generate_dataset(const Environment& env, const DatasetSpec& spec) {
  spec.validate();
  PreferenceDataset data = sample_dataset(env, spec.n_pairs, spec.seed, spec.labeling);
  if (spec.oracle == OracleMode::environment) data = attach_oracle_rewards(data, env, OracleSource::environment);
  if (spec.oracle == OracleMode::convention) data = attach_oracle_rewards(data, env, OracleSource::convention);
  return data;
}

json ExperimentConfig::to_json() const {
  json doc;
  doc["seed"] = seed;
  if (const auto* p = std::get_if<fs::path>(&environment)) {
    doc["environment"] = {{"file", p->generic_string()}};
  } else if (const auto* g = std::get_if<EnvGenSpec>(&environment)) {
    doc["environment"] = {{"generate", app::to_json(*g)}};
  } else {
    doc["environment"] = {{"inline", prefcal::to_json(std::get<Environment>(environment))}};
  }
  if (const auto* p = std::get_if<fs::path>(&dataset)) {
    doc["dataset"] = {{"file", p->generic_string()}};
  } else if (const auto* d = std::get_if<DatasetSpec>(&dataset)) {
    doc["dataset"] = {{"n_pairs", d->n_pairs},
                      {"seed", d->seed},
                      {"labeling", std::string(prefcal::to_string(d->labeling))},
                      {"oracle", std::string(to_string(d->oracle))}};
  } else {
    doc["dataset"] = nullptr;
  }
  doc["train"] = train_to_json(train);
  doc["output_dir"] = output_dir.generic_string();
  doc["sweep"] = {{"betas", sweep_betas}};
  return doc;
}

ExperimentConfig config_from_json(const json& doc, const fs::path& base_dir, std::uint64_t default_seed) {
  if (!doc.is_object()) bad("config must be a JSON object");
  ExperimentConfig c;
  c.seed = seed_or(doc, "seed", default_seed, "config");

  const json& env = require(doc, "environment", "config");
  if (env.contains("file")) {
    const fs::path p = resolve(base_dir, get_or<std::string>(env, "file", "", "environment"));
    if (!fs::exists(p)) bad("environment file not found: " + p.string());
    c.environment = p;
  } else if (env.contains("generate")) {
    c.environment = env_gen_spec_from_json(env.at("generate"));
  } else if (env.contains("inline")) {
    try {
      c.environment = environment_from_json(env.at("inline"));
    } catch (const Error& e) {
      bad(e.what());
    }
  } else {
    bad("environment must have one of 'file', 'generate' or 'inline'");
  }

  if (doc.contains("dataset") && !doc.at("dataset").is_null()) {
    const json& d = doc.at("dataset");
    if (d.contains("file")) {
      const fs::path p = resolve(base_dir, get_or<std::string>(d, "file", "", "dataset"));
      if (!fs::exists(p)) bad("dataset file not found: " + p.string());
      c.dataset = p;
    } else {
      DatasetSpec s;
      s.n_pairs = get_or<int>(d, "n_pairs", s.n_pairs, "dataset");
      s.seed = seed_or(d, "seed", c.seed, "dataset");
      try {
        s.labeling = labeling_from_string(get_or<std::string>(d, "labeling", "bt", "dataset"));
      } catch (const Error& e) {
        bad(e.what());
      }
      s.oracle = oracle_from_string(get_or<std::string>(d, "oracle", "none", "dataset"));
      s.validate();
      c.dataset = s;
    }
  }

  if (doc.contains("train")) c.train = train_from_json(doc.at("train"));
  c.train.validate();
  c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "out", "config"));
  if (doc.contains("sweep") && doc.at("sweep").is_object()) {
    c.sweep_betas = get_or<std::vector<double>>(doc.at("sweep"), "betas", {}, "sweep");
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, std::uint64_t default_seed) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    bad("cannot parse config " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    bad(e.what());
  }
  return config_from_json(doc, path.parent_path(), default_seed);
}

void apply_overrides(ExperimentConfig& config, const Overrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.beta) config.train.loss.beta = *o.beta;
  if (o.method) {
    try {
      config.train.loss.method = method_from_string(*o.method);
    } catch (const Error& e) {
      bad(e.what());
    }
  }
  if (o.steps) config.train.steps = *o.steps;
  if (o.lr) config.train.learning_rate = *o.lr;
  if (o.out) config.output_dir = *o.out;
  config.train.validate();
}

Environment resolve_environment(const ExperimentConfig& config) {
  if (const auto* p = std::get_if<fs::path>(&config.environment)) return load_environment(*p);
  if (const auto* g = std::get_if<EnvGenSpec>(&config.environment)) return generate_environment(*g);
  return std::get<Environment>(config.environment);
}

std::optional<PreferenceDataset> resolve_dataset(const ExperimentConfig& config, const Environment& env) {
  if (const auto* p = std::get_if<fs::path>(&config.dataset)) {
    PreferenceDataset d = load_dataset(*p);
    check_dataset(d, env);
    return d;
  }
  if (const auto* s = std::get_if<DatasetSpec>(&config.dataset)) return generate_dataset(env, *s);
  return std::nullopt;
}

}  // namespace prefcal::app
