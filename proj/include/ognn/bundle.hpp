#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ognn/common.hpp"
#include "ognn/dataset.hpp"
#include "ognn/graph.hpp"
#include "ognn/run_config.hpp"

namespace ognn {

inline constexpr int kBundleVersion = 1;

/// A validated on-disk dataset bundle:
///   manifest.json   counts, homophily, ingest options
///   edges.txt       canonical undirected pairs "u v", u < v, sorted
///   features.bin    binary feature container
///   labels.txt      one label per line
///   splits/         optional split_<i>.{train,val,test}.txt index lists
struct Bundle {
  Graph graph;
  Dataset dataset;
  SplitSet splits;  // empty when the bundle carries none
  json manifest;
};

/// Ingests raw inputs into a bundle directory. Deterministic: identical
/// inputs produce byte-identical bundles.
inline json ingest_bundle(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                          const std::vector<SplitFilePaths>& split_files = {},
                          SplitFileFormat split_format = SplitFileFormat::indices) {
  if (cfg.edges.empty() || cfg.labels.empty()) {
    throw ConfigError("ingest: dataset.edges and dataset.labels are required");
  }
  if (cfg.nodes <= 0 || cfg.classes <= 0) {
    throw ConfigError("ingest: dataset.nodes and dataset.classes must be positive");
  }
  EdgeListOptions opts{cfg.symmetrize, cfg.drop_self_loops, cfg.reverse};
  EdgeListStats stats;
  Graph graph = Graph::load_edge_list(cfg.edges, cfg.nodes, opts, &stats);

  Dataset ds;
  ds.name = cfg.name;
  ds.num_classes = cfg.classes;
  ds.labels = load_labels(cfg.labels, cfg.nodes);
  if (cfg.empty_features == "onehot") {
    ds.features = make_empty_features(EmptyFeatures::onehot, cfg.nodes,
                                      cfg.onehot_width > 0 ? cfg.onehot_width : cfg.nodes);
  } else if (cfg.empty_features == "constant") {
    ds.features = make_empty_features(EmptyFeatures::constant, cfg.nodes, 0);
  } else {
    if (cfg.features.empty()) throw ConfigError("ingest: dataset.features is required");
    if (cfg.feature_dim <= 0) throw ConfigError("ingest: dataset.feature-dim must be positive");
    ds.features = load_features(cfg.features, cfg.nodes, cfg.feature_dim);
  }
  ds.validate();

  SplitSet splits;
  if (!split_files.empty()) splits = load_split_files(split_files, cfg.nodes, split_format);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream edges(out_dir / "edges.txt");
    for (int v = 0; v < graph.num_nodes(); ++v) {
      for (int u : graph.neighbors(v)) {
        if (v < u) edges << v << ' ' << u << '\n';
      }
    }
  }
  save_features_binary(out_dir / "features.bin", ds.features);
  {
    std::ofstream labels(out_dir / "labels.txt");
    for (int y : ds.labels) labels << y << '\n';
  }
  if (!splits.splits.empty()) {
    fs::create_directories(out_dir / "splits");
    for (std::size_t i = 0; i < splits.splits.size(); ++i) {
      const auto stem = out_dir / "splits" / ("split_" + std::to_string(i));
      save_mask_file(stem.string() + ".train.txt", splits.splits[i].train);
      save_mask_file(stem.string() + ".val.txt", splits.splits[i].val);
      save_mask_file(stem.string() + ".test.txt", splits.splits[i].test);
    }
  }

  json manifest;
  manifest["format-version"] = kBundleVersion;
  manifest["name"] = cfg.name;
  manifest["nodes"] = graph.num_nodes();
  manifest["features"] = ds.num_features();
  manifest["classes"] = ds.num_classes;
  manifest["homophily"] = edge_homophily(graph, ds.labels);
  manifest["edges"] = {{"pairs-read", stats.pairs_read},
                       {"self-loops-dropped", stats.self_loops_dropped},
                       {"unique-pairs", stats.unique_pairs},
                       {"undirected", graph.num_undirected_edges()}};
  manifest["options"] = {{"symmetrize", cfg.symmetrize},
                         {"drop-self-loops", cfg.drop_self_loops},
                         {"reverse", cfg.reverse},
                         {"empty-features", cfg.empty_features}};
  manifest["splits"] = splits.splits.size();
  {
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << '\n';
  }
  return manifest;
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IngestError("bundle: cannot open " + (dir / "manifest.json").string());
  Bundle b;
  try {
    mf >> b.manifest;
  } catch (const json::exception& e) {
    throw IngestError("bundle: bad manifest in " + dir.string() + ": " + e.what());
  }
  if (b.manifest.value("format-version", 0) != kBundleVersion) {
    throw IngestError("bundle: unsupported format version in " + dir.string());
  }
  const int n = b.manifest.at("nodes").get<int>();
  b.graph = Graph::load_edge_list(dir / "edges.txt", n, {.symmetrize = true});
  b.dataset.name = b.manifest.value("name", dir.filename().string());
  b.dataset.features = load_features_binary(dir / "features.bin");
  b.dataset.labels = load_labels(dir / "labels.txt", n);
  b.dataset.num_classes = b.manifest.at("classes").get<int>();
  b.dataset.validate();
  const auto split_count = b.manifest.value("splits", std::size_t{0});
  if (split_count > 0) {
    std::vector<SplitFilePaths> paths;
    for (std::size_t i = 0; i < split_count; ++i) {
      const auto stem = dir / "splits" / ("split_" + std::to_string(i));
      paths.push_back({stem.string() + ".train.txt", stem.string() + ".val.txt",
                       stem.string() + ".test.txt"});
    }
    b.splits = load_split_files(paths, n, SplitFileFormat::indices);
  }
  return b;
}

}  // namespace ognn
