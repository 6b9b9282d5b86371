#include <cmath>
#include <set>

#include <json.hpp>

#include "logfid/error.hpp"
#include "logfid/pipeline.hpp"

namespace logfid {

using nlohmann::ordered_json;

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.preset = "desk";
  c.encoder.d = 16;
  c.encoder.n_layers = 2;
  c.encoder.n_heads = 4;
  c.encoder.max_length = 16;
  c.encoder.learning_rate = 0.5;
  // same learning_rate * lambda product as the full-size preset
  c.encoder.lambda = 2e-5;
  c.encoder.phase1_max_epochs = 15;
  c.encoder.phase1_patience = 4;
  c.encoder.phase2_max_epochs = 5;
  c.encoder.batch_size = 32;
  c.max_training_windows = 1500;
  return c;
}

PipelineConfig PipelineConfig::from_preset(const std::string& name) {
  if (name == "full") return PipelineConfig{};
  if (name == "desk") return desk();
  throw ConfigError("unknown preset '" + name + "' (expected full or desk)");
}

void PipelineConfig::validate() const {
  if (!(parser.similarity_threshold > 0.0 && parser.similarity_threshold < 1.0)) {
    throw ConfigError("parser.similarity_threshold must lie in (0, 1)");
  }
  if (parser.depth < 1) throw ConfigError("parser.depth must be positive");
  auto positive_window = [](double w) { return std::isfinite(w) && w > 0.0; };
  if (!positive_window(window_size)) throw ConfigError("window_size must be a positive number of seconds");
  for (double w : window_sizes) {
    if (!positive_window(w)) throw ConfigError("window_sizes must be positive");
  }
  encoder.validate();
  if (k < 1) throw ConfigError("k must be at least 1");
  if (hmm_states < 1) throw ConfigError("hmm_states must be at least 1");
  if (hmm.max_iterations < 1 || !(hmm.tolerance >= 0.0) || !(hmm.smoothing >= 0.0)) {
    throw ConfigError("invalid HMM fit options");
  }
  if (max_training_windows < 0) throw ConfigError("max_training_windows must be non-negative");
  if (!(train_fraction > 0.0) || !(validation_fraction > 0.0) ||
      train_fraction + validation_fraction >= 1.0) {
    throw ConfigError("train and validation fractions must be positive and leave a test share");
  }
  if (!(fti_train_fraction > 0.0 && fti_train_fraction < 1.0)) {
    throw ConfigError("fti_train_fraction must lie in (0, 1)");
  }
  if (detection_repetitions < 1 || fti_repetitions < 1) throw ConfigError("repetitions must be positive");
  for (double b : injection_ratios) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("injection ratios must lie in [0, 1]");
  }
  if (fti.max_iterations < 1 || fti.max_depth < 1 || fti.min_leaf < 1 || fti.n_trees < 1 ||
      !(fti.inverse_l2 > 0.0)) {
    throw ConfigError("invalid FTI options");
  }
  if (n_tasks < 1) throw ConfigError("n_tasks must be at least 1");
  if (!(failure_ratio > 0.0 && failure_ratio < 1.0)) throw ConfigError("failure_ratio must lie in (0, 1)");
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["preset"] = preset;
  j["parser"] = {{"similarity_threshold", parser.similarity_threshold},
                 {"depth", parser.depth},
                 {"max_children", parser.max_children}};
  j["window_size"] = window_size;
  j["encoder"] = {{"d", encoder.d},
                  {"n_layers", encoder.n_layers},
                  {"n_heads", encoder.n_heads},
                  {"ff_dim", encoder.ff_dim},
                  {"dropout", encoder.dropout},
                  {"learning_rate", encoder.learning_rate},
                  {"max_length", encoder.max_length},
                  {"lambda", encoder.lambda},
                  {"phase1_max_epochs", encoder.phase1_max_epochs},
                  {"phase1_patience", encoder.phase1_patience},
                  {"phase2_max_epochs", encoder.phase2_max_epochs},
                  {"batch_size", encoder.batch_size}};
  j["k"] = k;
  j["hmm_states"] = hmm_states;
  j["hmm"] = {{"max_iterations", hmm.max_iterations},
              {"tolerance", hmm.tolerance},
              {"smoothing", hmm.smoothing}};
  j["max_training_windows"] = max_training_windows;
  j["splits"] = {{"train_fraction", train_fraction},
                 {"validation_fraction", validation_fraction},
                 {"fti_train_fraction", fti_train_fraction},
                 {"detection_repetitions", detection_repetitions},
                 {"fti_repetitions", fti_repetitions}};
  j["window_sizes"] = window_sizes;
  j["injection_ratios"] = injection_ratios;
  j["fti"] = {{"classifier", to_string(fti.kind)},
              {"representation", to_string(fti_representation)},
              {"max_iterations", fti.max_iterations},
              {"tolerance", fti.tolerance},
              {"inverse_l2", fti.inverse_l2},
              {"max_depth", fti.max_depth},
              {"min_leaf", fti.min_leaf},
              {"n_trees", fti.n_trees},
              {"bootstrap", fti.bootstrap},
              {"all_features", fti.all_features}};
  j["synth"] = {{"n_tasks", n_tasks}, {"failure_ratio", failure_ratio}};
  j["seed"] = seed;
  j["paths"] = {{"input", input}, {"labels", labels}, {"output", output}, {"bundle", bundle}};
  return j.dump(2);
}

namespace {

// Reads the keys of one JSON object, rejecting any it does not know.
class Reader {
 public:
  Reader(const ordered_json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown configuration key " + where_ + key);
    }
  }

  template <class T>
  void get(const std::string& key, T& target) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      target = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("configuration key " + where_ + key + " has the wrong type");
    }
  }

  const ordered_json* child(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_ + key + "."; }

 private:
  const ordered_json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::string preset = "full";
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("configuration key preset must be a string");
    preset = j["preset"].get<std::string>();
  }
  PipelineConfig c = from_preset(preset);
  {
    Reader r(j, "");
    r.get("preset", c.preset);
    if (auto p = r.child("parser")) {
      Reader s(*p, r.path("parser"));
      s.get("similarity_threshold", c.parser.similarity_threshold);
      s.get("depth", c.parser.depth);
      s.get("max_children", c.parser.max_children);
    }
    r.get("window_size", c.window_size);
    if (auto p = r.child("encoder")) {
      Reader s(*p, r.path("encoder"));
      s.get("d", c.encoder.d);
      s.get("n_layers", c.encoder.n_layers);
      s.get("n_heads", c.encoder.n_heads);
      s.get("ff_dim", c.encoder.ff_dim);
      s.get("dropout", c.encoder.dropout);
      s.get("learning_rate", c.encoder.learning_rate);
      s.get("max_length", c.encoder.max_length);
      s.get("lambda", c.encoder.lambda);
      s.get("phase1_max_epochs", c.encoder.phase1_max_epochs);
      s.get("phase1_patience", c.encoder.phase1_patience);
      s.get("phase2_max_epochs", c.encoder.phase2_max_epochs);
      s.get("batch_size", c.encoder.batch_size);
    }
    r.get("k", c.k);
    r.get("hmm_states", c.hmm_states);
    if (auto p = r.child("hmm")) {
      Reader s(*p, r.path("hmm"));
      s.get("max_iterations", c.hmm.max_iterations);
      s.get("tolerance", c.hmm.tolerance);
      s.get("smoothing", c.hmm.smoothing);
    }
    r.get("max_training_windows", c.max_training_windows);
    if (auto p = r.child("splits")) {
      Reader s(*p, r.path("splits"));
      s.get("train_fraction", c.train_fraction);
      s.get("validation_fraction", c.validation_fraction);
      s.get("fti_train_fraction", c.fti_train_fraction);
      s.get("detection_repetitions", c.detection_repetitions);
      s.get("fti_repetitions", c.fti_repetitions);
    }
    r.get("window_sizes", c.window_sizes);
    r.get("injection_ratios", c.injection_ratios);
    if (auto p = r.child("fti")) {
      Reader s(*p, r.path("fti"));
      std::string classifier = to_string(c.fti.kind);
      std::string representation = to_string(c.fti_representation);
      s.get("classifier", classifier);
      s.get("representation", representation);
      c.fti.kind = parse_classifier(classifier);
      c.fti_representation = parse_representation(representation);
      s.get("max_iterations", c.fti.max_iterations);
      s.get("tolerance", c.fti.tolerance);
      s.get("inverse_l2", c.fti.inverse_l2);
      s.get("max_depth", c.fti.max_depth);
      s.get("min_leaf", c.fti.min_leaf);
      s.get("n_trees", c.fti.n_trees);
      s.get("bootstrap", c.fti.bootstrap);
      s.get("all_features", c.fti.all_features);
    }
    if (auto p = r.child("synth")) {
      Reader s(*p, r.path("synth"));
      s.get("n_tasks", c.n_tasks);
      s.get("failure_ratio", c.failure_ratio);
    }
    r.get("seed", c.seed);
    if (auto p = r.child("paths")) {
      Reader s(*p, r.path("paths"));
      s.get("input", c.input);
      s.get("labels", c.labels);
      s.get("output", c.output);
      s.get("bundle", c.bundle);
    }
  }
  c.validate();
  return c;
}

std::uint64_t PipelineConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace logfid
