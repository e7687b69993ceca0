#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ognn/common.hpp"
#include "ognn/rng.hpp"

namespace ognn {

/// Node features, labels and class count for one graph.
struct Dataset {
  std::string name;
  Matd features;            // N x F
  std::vector<int> labels;  // length N, values in [0, num_classes)
  int num_classes = 0;

  int num_nodes() const { return static_cast<int>(features.rows()); }
  int num_features() const { return static_cast<int>(features.cols()); }

  void validate() const {
    if (static_cast<Index>(labels.size()) != features.rows()) {
      throw IngestError("dataset " + name + ": label count " + std::to_string(labels.size()) +
                        " != feature rows " + std::to_string(features.rows()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw IngestError("dataset " + name + ": label " + std::to_string(labels[i]) +
                          " at node " + std::to_string(i) + " outside [0," +
                          std::to_string(num_classes) + ")");
      }
    }
  }
};

// --- feature matrix I/O -----------------------------------------------------

/// Delimited text: one node per line, f reals separated by commas or spaces.
inline Matd load_features_text(const std::filesystem::path& path, int n, int f) {
  std::ifstream in(path);
  if (!in) throw IngestError("features: cannot open " + path.string());
  Matd x(n, f);
  std::string line;
  int row = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& c : line) {
      if (c == ',' || c == '\t' || c == '\r') c = ' ';
    }
    const char* b = line.data();
    const char* e = line.data() + line.size();
    while (b < e && *b == ' ') ++b;
    if (b == e || *b == '#') continue;
    if (row >= n) {
      throw IngestError("features: " + path.string() + ":" + std::to_string(lineno) +
                        ": more than " + std::to_string(n) + " rows");
    }
    for (int j = 0; j < f; ++j) {
      double val = 0.0;
      auto r = std::from_chars(b, e, val);
      if (r.ec != std::errc{}) {
        throw IngestError("features: " + path.string() + ":" + std::to_string(lineno) +
                          ": expected " + std::to_string(f) + " values, failed at column " +
                          std::to_string(j));
      }
      x(row, j) = val;
      b = r.ptr;
      while (b < e && *b == ' ') ++b;
    }
    if (b != e) {
      throw IngestError("features: " + path.string() + ":" + std::to_string(lineno) +
                        ": trailing data after " + std::to_string(f) + " values");
    }
    ++row;
  }
  if (row != n) {
    throw IngestError("features: " + path.string() + ": expected " + std::to_string(n) +
                      " rows, got " + std::to_string(row));
  }
  return x;
}

// Binary feature container: magic "OGNF", u32 version, u64 n, u64 f,
// u32 element width in bytes (8 = f64), then row-major payload,
// little-endian throughout.
inline constexpr char kFeatureMagic[4] = {'O', 'G', 'N', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void save_features_binary(const std::filesystem::path& path, const Matd& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("features: cannot write " + path.string());
  out.write(kFeatureMagic, 4);
  const std::uint32_t version = kFeatureVersion;
  const std::uint64_t n = static_cast<std::uint64_t>(x.rows());
  const std::uint64_t f = static_cast<std::uint64_t>(x.cols());
  const std::uint32_t width = 8;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&f), 8);
  out.write(reinterpret_cast<const char*>(&width), 4);
  out.write(reinterpret_cast<const char*>(x.data()),
            static_cast<std::streamsize>(n * f * sizeof(double)));
  if (!out) throw IngestError("features: short write to " + path.string());
}

inline Matd load_features_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("features: cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0, width = 0;
  std::uint64_t n = 0, f = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&f), 8);
  in.read(reinterpret_cast<char*>(&width), 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw IngestError("features: " + path.string() + ": bad magic");
  }
  if (version != kFeatureVersion) {
    throw IngestError("features: " + path.string() + ": unsupported version " +
                      std::to_string(version));
  }
  if (width != 8) {
    throw IngestError("features: " + path.string() + ": unsupported element width " +
                      std::to_string(width));
  }
  Matd x(static_cast<Index>(n), static_cast<Index>(f));
  in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(n * f * sizeof(double)));
  if (!in) throw IngestError("features: " + path.string() + ": truncated payload");
  return x;
}

/// Dispatches on the container magic, falling back to text.
inline Matd load_features(const std::filesystem::path& path, int n, int f) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IngestError("features: cannot open " + path.string());
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe && std::memcmp(magic, kFeatureMagic, 4) == 0) {
      Matd x = load_features_binary(path);
      if (x.rows() != n || x.cols() != f) {
        throw IngestError("features: " + path.string() + ": container is " + shape_str(x) +
                          ", expected " + shape_str(n, f));
      }
      return x;
    }
  }
  return load_features_text(path, n, f);
}

/// Replacements for the feature matrix when a run is configured to ignore
/// node content. onehot: identity restricted to `width` columns. constant:
/// a single all-ones column whose projection is learned.
enum class EmptyFeatures { off, onehot, constant };

inline Matd make_empty_features(EmptyFeatures mode, int n, int width) {
  switch (mode) {
    case EmptyFeatures::onehot: {
      if (width <= 0) throw ConfigError("empty features: onehot width must be positive");
      Matd x = Matd::Zero(n, width);
      for (int i = 0; i < n && i < width; ++i) x(i, i) = 1.0;
      return x;
    }
    case EmptyFeatures::constant:
      return Matd::Ones(n, 1);
    case EmptyFeatures::off:
      throw ContractError("empty features: mode is off");
  }
  throw ConfigError("empty features: unknown mode");
}

inline std::vector<int> load_labels(const std::filesystem::path& path, int n) {
  std::ifstream in(path);
  if (!in) throw IngestError("labels: cannot open " + path.string());
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  int y = 0;
  while (in >> y) labels.push_back(y);
  if (static_cast<int>(labels.size()) != n) {
    throw IngestError("labels: " + path.string() + ": expected " + std::to_string(n) +
                      " entries, got " + std::to_string(labels.size()));
  }
  return labels;
}

// --- splits ------------------------------------------------------------------

using Mask = std::vector<std::uint8_t>;

struct Split {
  Mask train, val, test;
};

struct SplitSet {
  std::vector<Split> splits;
  std::string source;  // "file" or "generated(seed=...,ratios=...)"

  std::size_t size() const { return splits.size(); }
};

inline std::size_t mask_count(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t(1)));
}

inline void validate_split(const Split& s, int n) {
  if (static_cast<int>(s.train.size()) != n || static_cast<int>(s.val.size()) != n ||
      static_cast<int>(s.test.size()) != n) {
    throw IngestError("split: mask length != node count");
  }
  for (int i = 0; i < n; ++i) {
    const int mem = (s.train[static_cast<std::size_t>(i)] ? 1 : 0) +
                    (s.val[static_cast<std::size_t>(i)] ? 1 : 0) +
                    (s.test[static_cast<std::size_t>(i)] ? 1 : 0);
    if (mem > 1) {
      throw IngestError("split: node " + std::to_string(i) + " belongs to multiple masks");
    }
  }
  if (mask_count(s.train) == 0 || mask_count(s.val) == 0 || mask_count(s.test) == 0) {
    throw IngestError("split: a mask is empty");
  }
}

struct SplitRatios {
  double train = 0.48, val = 0.32, test = 0.20;
};

struct SplitWarning {
  int split_index;
  int missing_class;
};

/// `count` independent seeded shuffles partitioned by ratios. A class
/// absent from a train mask is recorded as a warning, not an error.
inline SplitSet generate_splits(int n, const std::vector<int>& labels, std::uint64_t seed,
                                SplitRatios ratios, int count,
                                std::vector<SplitWarning>* warnings = nullptr) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw ConfigError("splits: ratios must be positive");
  }
  if (ratios.train + ratios.val + ratios.test > 1.0 + 1e-12) {
    throw ConfigError("splits: ratios must sum to at most 1");
  }
  const auto n_train = static_cast<std::size_t>(n * ratios.train);
  const auto n_val = static_cast<std::size_t>(n * ratios.val);
  const auto n_test = static_cast<std::size_t>(n * ratios.test);
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw ConfigError("splits: a partition would be empty at n=" + std::to_string(n));
  }
  SplitSet out;
  out.source = "generated(seed=" + std::to_string(seed) + ",ratios=" + std::to_string(ratios.train) +
               "/" + std::to_string(ratios.val) + "/" + std::to_string(ratios.test) + ")";
  for (int s = 0; s < count; ++s) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    std::shuffle(order.begin(), order.end(), rng);
    Split sp{Mask(static_cast<std::size_t>(n), 0), Mask(static_cast<std::size_t>(n), 0),
             Mask(static_cast<std::size_t>(n), 0)};
    for (std::size_t i = 0; i < n_train; ++i) sp.train[static_cast<std::size_t>(order[i])] = 1;
    for (std::size_t i = n_train; i < n_train + n_val; ++i) {
      sp.val[static_cast<std::size_t>(order[i])] = 1;
    }
    for (std::size_t i = n_train + n_val; i < n_train + n_val + n_test; ++i) {
      sp.test[static_cast<std::size_t>(order[i])] = 1;
    }
    if (warnings && !labels.empty()) {
      const int num_classes = 1 + *std::max_element(labels.begin(), labels.end());
      std::vector<char> seen(static_cast<std::size_t>(num_classes), 0);
      for (int i = 0; i < n; ++i) {
        if (sp.train[static_cast<std::size_t>(i)]) seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] = 1;
      }
      for (int c = 0; c < num_classes; ++c) {
        if (!seen[static_cast<std::size_t>(c)]) warnings->push_back({s, c});
      }
    }
    out.splits.push_back(std::move(sp));
  }
  return out;
}

enum class SplitFileFormat { indices, mask01 };

/// One file per role; either node indices (one per line) or a 0/1 mask with
/// one line per node.
inline Mask load_mask_file(const std::filesystem::path& path, int n, SplitFileFormat format) {
  std::ifstream in(path);
  if (!in) throw IngestError("split: cannot open " + path.string());
  Mask m(static_cast<std::size_t>(n), 0);
  if (format == SplitFileFormat::indices) {
    int idx = 0;
    while (in >> idx) {
      if (idx < 0 || idx >= n) {
        throw IngestError("split: " + path.string() + ": index " + std::to_string(idx) +
                          " outside [0," + std::to_string(n) + ")");
      }
      m[static_cast<std::size_t>(idx)] = 1;
    }
  } else {
    int bit = 0, row = 0;
    while (in >> bit) {
      if (bit != 0 && bit != 1) {
        throw IngestError("split: " + path.string() + ": mask entry must be 0 or 1");
      }
      if (row >= n) throw IngestError("split: " + path.string() + ": more than n mask rows");
      m[static_cast<std::size_t>(row++)] = static_cast<std::uint8_t>(bit);
    }
    if (row != n) {
      throw IngestError("split: " + path.string() + ": expected " + std::to_string(n) +
                        " mask rows, got " + std::to_string(row));
    }
  }
  return m;
}

struct SplitFilePaths {
  std::filesystem::path train, val, test;
};

inline SplitSet load_split_files(const std::vector<SplitFilePaths>& paths, int n,
                                 SplitFileFormat format = SplitFileFormat::indices) {
  SplitSet out;
  out.source = "file";
  for (const auto& p : paths) {
    Split s{load_mask_file(p.train, n, format), load_mask_file(p.val, n, format),
            load_mask_file(p.test, n, format)};
    for (int i = 0; i < n; ++i) {
      const bool tr = s.train[static_cast<std::size_t>(i)];
      const bool va = s.val[static_cast<std::size_t>(i)];
      const bool te = s.test[static_cast<std::size_t>(i)];
      if ((tr && va) || (tr && te) || (va && te)) {
        throw IngestError("split: node " + std::to_string(i) + " overlaps between roles in " +
                          p.train.string() + "/" + p.val.string() + "/" + p.test.string());
      }
    }
    validate_split(s, n);
    out.splits.push_back(std::move(s));
  }
  return out;
}

inline void save_mask_file(const std::filesystem::path& path, const Mask& m) {
  std::ofstream out(path);
  if (!out) throw IngestError("split: cannot write " + path.string());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) out << i << '\n';
  }
}

}  // namespace ognn
