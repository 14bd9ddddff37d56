#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "divsim/errors.hpp"
#include "divsim/experiment.hpp"

namespace divsim {

namespace {

using Json = nlohmann::ordered_json;

// Wraps a JSON object so every key must be claimed; leftovers are errors.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string section)
      : j_(j), section_(std::move(section)) {
    if (!j.is_object())
      throw ConfigError("'" + section_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;  // keep default
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("bad value type for key '" + qualified(key) + "'");
    }
  }

  const Json* claim(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown key '" + qualified(it.key()) + "'");
  }

 private:
  std::string qualified(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

  const Json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

void check_choice(const std::string& value, const char* key,
                  std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  throw ConfigError(std::string("invalid value '") + value + "' for '" + key + "'");
}

AuxMode aux_mode_for_scheme(const std::string& scheme) {
  if (scheme == "fixed_aux") return AuxMode::kFixed;
  if (scheme == "untargeted" || scheme == "none") return AuxMode::kNone;
  return AuxMode::kRandom;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  StrictObject root(j, "");

  if (const Json* w = root.claim("world")) {
    StrictObject wo(*w, "world");
    wo.get("n_identities", cfg.world.n_identities);
    wo.get("images_per_identity", cfg.world.images_per_identity);
    wo.get("intra_sigma", cfg.world.intra_sigma);
    wo.get("n_extractors", cfg.world.n_extractors);
    wo.get("extractor_noise", cfg.world.extractor_noise);
    wo.get("aux_pool_size", cfg.world.aux_pool_size);
    wo.get("dims", cfg.world.dims);
    wo.finish();
  }

  if (const Json* p = root.claim("protection")) {
    StrictObject po(*p, "protection");
    po.get("scheme", cfg.scheme);
    po.get("alpha1", cfg.protection.alpha1);
    po.get("alpha2", cfg.protection.alpha2);
    po.get("alpha3", cfg.protection.alpha3);
    po.get("alpha4", cfg.protection.alpha4);
    po.get("delta", cfg.protection.delta);
    po.get("queue_capacity", cfg.protection.queue_capacity);
    po.get("step_size", cfg.protection.step_size);
    po.get("steps", cfg.protection.steps);
    po.get("substitute_extractors", cfg.protection.substitute_extractors);
    po.get("use_adam", cfg.protection.use_adam);
    po.get("target_prompt", cfg.protection.target_prompt);
    po.get("source_prompt", cfg.protection.source_prompt);
    po.finish();
  }

  if (const Json* t = root.claim("tracking")) {
    StrictObject to(*t, "tracking");
    to.get("strategy", cfg.strategy);
    to.get("mode", cfg.mode);
    to.get("initial_knowledge", cfg.initial_knowledge);
    to.get("scenario", cfg.scenario_kind);
    to.get("tracker_extractor", cfg.tracker_extractor);
    to.get("verification_threshold", cfg.verification_threshold);
    to.get("fp_tolerance", cfg.fp_tolerance);
    to.get("preprocessing_sigma", cfg.preprocessing_sigma);
    to.get("query_split", cfg.query_split);
    to.finish();
  }

  root.get("n_trackees", cfg.n_trackees);
  if (const Json* s = root.claim("sweep")) {
    if (!s->is_object()) throw ConfigError("'sweep' must be an object");
    for (auto it = s->begin(); it != s->end(); ++it) {
      if (!it->is_array())
        throw ConfigError("sweep values for '" + it.key() + "' must be an array");
      std::vector<double> vals;
      for (const auto& v : *it) {
        if (!v.is_number())
          throw ConfigError("sweep values for '" + it.key() + "' must be numbers");
        vals.push_back(v.get<double>());
      }
      cfg.sweep[it.key()] = std::move(vals);
    }
  }
  root.get("output_dir", cfg.output_dir);
  root.get("master_seed", cfg.master_seed);
  root.finish();

  check_choice(cfg.scheme, "protection.scheme",
               {"none", "untargeted", "fixed_aux", "random_aux", "divtrackee"});
  check_choice(cfg.strategy, "tracking.strategy", {"static", "dynamic", "both"});
  check_choice(cfg.mode, "tracking.mode", {"recognition", "verification"});
  check_choice(cfg.initial_knowledge, "tracking.initial_knowledge",
               {"clean", "protected"});
  check_choice(cfg.scenario_kind, "tracking.scenario",
               {"query_target", "gallery_target"});
  if (cfg.mode == "verification" && cfg.strategy != "dynamic")
    throw ConfigError("verification mode requires tracking.strategy = dynamic");
  if (cfg.verification_threshold < -1.0 || cfg.verification_threshold > 1.0)
    throw ConfigError("tracking.verification_threshold must lie in [-1, 1]");
  if (cfg.n_trackees < 1) throw ConfigError("n_trackees must be >= 1");
  if (cfg.n_trackees >= cfg.world.n_identities)
    throw ConfigError("n_trackees must be smaller than world.n_identities");
  if (cfg.query_split < 0.0 || cfg.query_split >= 1.0)
    throw ConfigError("tracking.query_split must lie in [0, 1)");
  if (cfg.tracker_extractor < 0 || cfg.tracker_extractor >= cfg.world.n_extractors)
    throw ConfigError("tracking.tracker_extractor out of range");
  for (int id : cfg.protection.substitute_extractors)
    if (id < 0 || id >= cfg.world.n_extractors)
      throw ConfigError("protection.substitute_extractors entry out of range");

  cfg.protection.aux_mode = aux_mode_for_scheme(cfg.scheme);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  Json j;
  j["world"] = {{"n_identities", cfg.world.n_identities},
                {"images_per_identity", cfg.world.images_per_identity},
                {"intra_sigma", cfg.world.intra_sigma},
                {"n_extractors", cfg.world.n_extractors},
                {"extractor_noise", cfg.world.extractor_noise},
                {"aux_pool_size", cfg.world.aux_pool_size},
                {"dims", cfg.world.dims}};
  j["protection"] = {{"scheme", cfg.scheme},
                     {"alpha1", cfg.protection.alpha1},
                     {"alpha2", cfg.protection.alpha2},
                     {"alpha3", cfg.protection.alpha3},
                     {"alpha4", cfg.protection.alpha4},
                     {"delta", cfg.protection.delta},
                     {"queue_capacity", cfg.protection.queue_capacity},
                     {"step_size", cfg.protection.step_size},
                     {"steps", cfg.protection.steps},
                     {"substitute_extractors", cfg.protection.substitute_extractors},
                     {"use_adam", cfg.protection.use_adam},
                     {"target_prompt", cfg.protection.target_prompt},
                     {"source_prompt", cfg.protection.source_prompt}};
  j["tracking"] = {{"strategy", cfg.strategy},
                   {"mode", cfg.mode},
                   {"initial_knowledge", cfg.initial_knowledge},
                   {"scenario", cfg.scenario_kind},
                   {"tracker_extractor", cfg.tracker_extractor},
                   {"verification_threshold", cfg.verification_threshold},
                   {"fp_tolerance", cfg.fp_tolerance},
                   {"preprocessing_sigma", cfg.preprocessing_sigma},
                   {"query_split", cfg.query_split}};
  j["n_trackees"] = cfg.n_trackees;
  Json sweep = Json::object();
  for (const auto& [k, v] : cfg.sweep) sweep[k] = v;
  j["sweep"] = sweep;
  j["output_dir"] = cfg.output_dir;
  j["master_seed"] = cfg.master_seed;
  return j.dump(2) + "\n";
}

void apply_override(ExperimentConfig& cfg, const std::string& name, double value) {
  if (name == "protection.alpha1") cfg.protection.alpha1 = value;
  else if (name == "protection.alpha2") cfg.protection.alpha2 = value;
  else if (name == "protection.alpha3") cfg.protection.alpha3 = value;
  else if (name == "protection.alpha4") cfg.protection.alpha4 = value;
  else if (name == "protection.delta") cfg.protection.delta = value;
  else if (name == "protection.queue_capacity")
    cfg.protection.queue_capacity = static_cast<int>(value);
  else if (name == "protection.step_size") cfg.protection.step_size = value;
  else if (name == "protection.steps") cfg.protection.steps = static_cast<int>(value);
  else if (name == "world.intra_sigma") cfg.world.intra_sigma = value;
  else if (name == "world.extractor_noise") cfg.world.extractor_noise = value;
  else if (name == "world.n_identities")
    cfg.world.n_identities = static_cast<int>(value);
  else if (name == "world.images_per_identity")
    cfg.world.images_per_identity = static_cast<int>(value);
  else if (name == "tracking.preprocessing_sigma") cfg.preprocessing_sigma = value;
  else if (name == "tracking.verification_threshold")
    cfg.verification_threshold = value;
  else
    throw ConfigError("unknown sweep parameter '" + name + "'");
}

}  // namespace divsim
