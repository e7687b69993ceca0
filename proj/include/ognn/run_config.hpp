#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "ognn/common.hpp"
#include "ognn/dataset.hpp"
#include "ognn/model.hpp"
#include "ognn/train.hpp"

namespace ognn {

using json = nlohmann::json;

struct DatasetConfig {
  std::string name = "dataset";
  std::string bundle;  // ingested bundle directory; raw paths below otherwise
  std::string edges, features, labels;
  int nodes = 0, feature_dim = 0, classes = 0;
  bool symmetrize = true;
  bool drop_self_loops = true;
  bool reverse = false;
  std::string empty_features = "off";  // off | onehot | constant
  int onehot_width = 0;
};

struct SplitsConfig {
  // Either explicit files or generated splits.
  std::vector<SplitFilePaths> files;
  std::string format = "indices";  // indices | mask01
  int generate_count = 0;
  double train_ratio = 0.48, val_ratio = 0.32, test_ratio = 0.20;
  std::uint64_t generate_seed = 1;
};

/// The versioned run configuration document. Unknown keys are rejected and
/// every validation problem is reported at once.
struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;  // num_classes/in_features filled at load time
  TrainConfig train;
  SplitsConfig splits;

  static RunConfig parse(const json& doc);
  static RunConfig parse_file(const std::filesystem::path& path);
  json to_json() const;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& section, std::vector<std::string>& errors) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      errors.push_back(section + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void get_to(const json& obj, const char* key, T& out, std::vector<std::string>& errors,
            const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    errors.push_back(section + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline RunConfig RunConfig::parse(const json& doc) {
  std::vector<std::string> errors;
  RunConfig cfg;
  detail::reject_unknown(doc, {"dataset", "model", "train", "splits"}, "config", errors);

  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    detail::reject_unknown(d,
                           {"name", "bundle", "edges", "features", "labels", "nodes",
                            "feature-dim", "classes", "symmetrize", "drop-self-loops",
                            "reverse", "empty-features", "onehot-width"},
                           "dataset", errors);
    detail::get_to(d, "name", cfg.dataset.name, errors, "dataset");
    detail::get_to(d, "bundle", cfg.dataset.bundle, errors, "dataset");
    detail::get_to(d, "edges", cfg.dataset.edges, errors, "dataset");
    detail::get_to(d, "features", cfg.dataset.features, errors, "dataset");
    detail::get_to(d, "labels", cfg.dataset.labels, errors, "dataset");
    detail::get_to(d, "nodes", cfg.dataset.nodes, errors, "dataset");
    detail::get_to(d, "feature-dim", cfg.dataset.feature_dim, errors, "dataset");
    detail::get_to(d, "classes", cfg.dataset.classes, errors, "dataset");
    detail::get_to(d, "symmetrize", cfg.dataset.symmetrize, errors, "dataset");
    detail::get_to(d, "drop-self-loops", cfg.dataset.drop_self_loops, errors, "dataset");
    detail::get_to(d, "reverse", cfg.dataset.reverse, errors, "dataset");
    detail::get_to(d, "empty-features", cfg.dataset.empty_features, errors, "dataset");
    detail::get_to(d, "onehot-width", cfg.dataset.onehot_width, errors, "dataset");
  }

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    detail::reject_unknown(m,
                           {"layers", "hidden", "chunk-factor", "mlp-layers", "tie-gates",
                            "layernorm-every", "variant", "sparse-input"},
                           "model", errors);
    detail::get_to(m, "layers", cfg.model.layers, errors, "model");
    detail::get_to(m, "hidden", cfg.model.hidden, errors, "model");
    detail::get_to(m, "chunk-factor", cfg.model.chunk_factor, errors, "model");
    detail::get_to(m, "mlp-layers", cfg.model.mlp_layers, errors, "model");
    detail::get_to(m, "tie-gates", cfg.model.tie_gates, errors, "model");
    detail::get_to(m, "layernorm-every", cfg.model.layernorm_every, errors, "model");
    detail::get_to(m, "sparse-input", cfg.model.sparse_input, errors, "model");
    if (m.contains("variant")) {
      try {
        cfg.model.variant = variant_from_string(m.at("variant").get<std::string>());
      } catch (const Error& e) {
        errors.push_back(std::string("model.variant: ") + e.what());
      } catch (const json::exception& e) {
        errors.push_back(std::string("model.variant: ") + e.what());
      }
    }
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    detail::reject_unknown(t,
                           {"lr", "dropout-theta", "dropout-xi", "l2-theta", "l2-xi",
                            "max-epochs", "patience", "seed", "deterministic", "precision"},
                           "train", errors);
    detail::get_to(t, "lr", cfg.train.lr, errors, "train");
    detail::get_to(t, "dropout-theta", cfg.model.dropout_theta, errors, "train");
    detail::get_to(t, "dropout-xi", cfg.model.dropout_xi, errors, "train");
    detail::get_to(t, "l2-theta", cfg.train.l2_theta, errors, "train");
    detail::get_to(t, "l2-xi", cfg.train.l2_xi, errors, "train");
    detail::get_to(t, "max-epochs", cfg.train.max_epochs, errors, "train");
    detail::get_to(t, "patience", cfg.train.patience, errors, "train");
    detail::get_to(t, "seed", cfg.train.seed, errors, "train");
    detail::get_to(t, "deterministic", cfg.train.deterministic, errors, "train");
    detail::get_to(t, "precision", cfg.train.precision, errors, "train");
  }

  if (doc.contains("splits")) {
    const json& s = doc.at("splits");
    detail::reject_unknown(
        s, {"files", "format", "count", "train-ratio", "val-ratio", "test-ratio", "seed"},
        "splits", errors);
    detail::get_to(s, "format", cfg.splits.format, errors, "splits");
    detail::get_to(s, "count", cfg.splits.generate_count, errors, "splits");
    detail::get_to(s, "train-ratio", cfg.splits.train_ratio, errors, "splits");
    detail::get_to(s, "val-ratio", cfg.splits.val_ratio, errors, "splits");
    detail::get_to(s, "test-ratio", cfg.splits.test_ratio, errors, "splits");
    detail::get_to(s, "seed", cfg.splits.generate_seed, errors, "splits");
    if (s.contains("files")) {
      try {
        for (const json& f : s.at("files")) {
          detail::reject_unknown(f, {"train", "val", "test"}, "splits.files[]", errors);
          SplitFilePaths p;
          p.train = f.at("train").get<std::string>();
          p.val = f.at("val").get<std::string>();
          p.test = f.at("test").get<std::string>();
          cfg.splits.files.push_back(std::move(p));
        }
      } catch (const json::exception& e) {
        errors.push_back(std::string("splits.files: ") + e.what());
      }
    }
  }

  if (cfg.splits.format != "indices" && cfg.splits.format != "mask01") {
    errors.push_back("splits.format: must be 'indices' or 'mask01'");
  }
  if (cfg.dataset.empty_features != "off" && cfg.dataset.empty_features != "onehot" &&
      cfg.dataset.empty_features != "constant") {
    errors.push_back("dataset.empty-features: must be 'off', 'onehot' or 'constant'");
  }
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
  return cfg;
}

inline RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse(doc);
}

inline json RunConfig::to_json() const {
  json doc;
  doc["dataset"] = {{"name", dataset.name},
                    {"bundle", dataset.bundle},
                    {"edges", dataset.edges},
                    {"features", dataset.features},
                    {"labels", dataset.labels},
                    {"nodes", dataset.nodes},
                    {"feature-dim", dataset.feature_dim},
                    {"classes", dataset.classes},
                    {"symmetrize", dataset.symmetrize},
                    {"drop-self-loops", dataset.drop_self_loops},
                    {"reverse", dataset.reverse},
                    {"empty-features", dataset.empty_features},
                    {"onehot-width", dataset.onehot_width}};
  doc["model"] = {{"layers", model.layers},
                  {"hidden", model.hidden},
                  {"chunk-factor", model.chunk_factor},
                  {"mlp-layers", model.mlp_layers},
                  {"tie-gates", model.tie_gates},
                  {"layernorm-every", model.layernorm_every},
                  {"variant", to_string(model.variant)},
                  {"sparse-input", model.sparse_input}};
  doc["train"] = {{"lr", train.lr},
                  {"dropout-theta", model.dropout_theta},
                  {"dropout-xi", model.dropout_xi},
                  {"l2-theta", train.l2_theta},
                  {"l2-xi", train.l2_xi},
                  {"max-epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"seed", train.seed},
                  {"deterministic", train.deterministic},
                  {"precision", train.precision}};
  json files = json::array();
  for (const auto& f : splits.files) {
    files.push_back({{"train", f.train.string()}, {"val", f.val.string()}, {"test", f.test.string()}});
  }
  doc["splits"] = {{"files", files},
                   {"format", splits.format},
                   {"count", splits.generate_count},
                   {"train-ratio", splits.train_ratio},
                   {"val-ratio", splits.val_ratio},
                   {"test-ratio", splits.test_ratio},
                   {"seed", splits.generate_seed}};
  return doc;
}

/// Applies a dotted-path override like "train.lr=0.005". The value text is
/// parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (key.empty()) throw ConfigError("override '" + assignment + "': empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

}  // namespace ognn
