#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ognn/autodiff.hpp"
#include "ognn/common.hpp"

namespace ognn {

struct EdgeListOptions {
  bool symmetrize = true;
  bool drop_self_loops = true;
  bool reverse = false;
};

/// Raw-input counts, for ingestion manifests. unique_pairs counts distinct
/// directed pairs after self-loop dropping, before symmetrization.
struct EdgeListStats {
  std::int64_t pairs_read = 0;
  std::int64_t self_loops_dropped = 0;
  std::int64_t unique_pairs = 0;
};

/// Immutable undirected self-loop-free topology in CSR form. Neighbor lists
/// are sorted ascending. Safe to share read-only across threads.
class Graph {
 public:
  Graph() = default;

  static Graph from_edges(const std::vector<std::pair<int, int>>& edges, int n,
                          const EdgeListOptions& opts = {}, EdgeListStats* stats = nullptr) {
    if (n < 0) throw ContractError("graph: negative node count");
    std::set<std::pair<int, int>> raw;
    std::int64_t self_loops = 0;
    for (auto [u, v] : edges) {
      if (opts.reverse) std::swap(u, v);
      if (u < 0 || u >= n || v < 0 || v >= n) {
        throw IngestError("graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                          ") out of range [0," + std::to_string(n) + ")");
      }
      if (u == v) {
        if (opts.drop_self_loops) {
          ++self_loops;
          continue;
        }
        throw IngestError("graph: self-loop at node " + std::to_string(u) +
                          " and drop-self-loops disabled");
      }
      raw.emplace(u, v);
    }
    if (stats) {
      stats->pairs_read = static_cast<std::int64_t>(edges.size());
      stats->self_loops_dropped = self_loops;
      stats->unique_pairs = static_cast<std::int64_t>(raw.size());
    }
    std::set<std::pair<int, int>> unique = std::move(raw);
    if (opts.symmetrize) {
      std::vector<std::pair<int, int>> rev;
      rev.reserve(unique.size());
      for (const auto& [u, v] : unique) rev.emplace_back(v, u);
      unique.insert(rev.begin(), rev.end());
    }
    Graph g;
    g.n_ = n;
    g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& [u, v] : unique) ++g.offsets_[static_cast<std::size_t>(u) + 1];
    for (std::size_t i = 1; i < g.offsets_.size(); ++i) g.offsets_[i] += g.offsets_[i - 1];
    g.neighbors_.reserve(unique.size());
    for (const auto& [u, v] : unique) g.neighbors_.push_back(v);  // set order: sorted per row
    if (!opts.symmetrize && !g.is_symmetric()) {
      throw IngestError("graph: input is not symmetric and symmetrize is disabled");
    }
    return g;
  }

  /// Parses whitespace- or comma-separated "u v" pairs, one per line.
  /// Blank lines and lines starting with '#' are skipped.
  static Graph load_edge_list(const std::filesystem::path& path, int n,
                              const EdgeListOptions& opts = {}, EdgeListStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw IngestError("graph: cannot open " + path.string());
    std::vector<std::pair<int, int>> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      for (char& c : line) {
        if (c == ',' || c == '\t' || c == '\r') c = ' ';
      }
      const auto first = line.find_first_not_of(' ');
      if (first == std::string::npos || line[first] == '#') continue;
      int u = 0, v = 0;
      const char* b = line.data() + first;
      const char* e = line.data() + line.size();
      auto r1 = std::from_chars(b, e, u);
      if (r1.ec != std::errc{}) {
        throw IngestError("graph: " + path.string() + ":" + std::to_string(lineno) +
                          ": malformed edge line");
      }
      const char* b2 = r1.ptr;
      while (b2 < e && *b2 == ' ') ++b2;
      auto r2 = std::from_chars(b2, e, v);
      if (r2.ec != std::errc{}) {
        throw IngestError("graph: " + path.string() + ":" + std::to_string(lineno) +
                          ": malformed edge line");
      }
      if (u < 0 || u >= n || v < 0 || v >= n) {
        throw IngestError("graph: " + path.string() + ":" + std::to_string(lineno) +
                          ": node index out of range [0," + std::to_string(n) + ")");
      }
      edges.emplace_back(u, v);
    }
    return from_edges(edges, n, opts, stats);
  }

  int num_nodes() const { return n_; }

  std::span<const int> neighbors(int v) const {
    check_node(v);
    const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v)]);
    const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v) + 1]);
    return {neighbors_.data() + b, e - b};
  }

  int degree(int v) const {
    check_node(v);
    return offsets_[static_cast<std::size_t>(v) + 1] - offsets_[static_cast<std::size_t>(v)];
  }

  /// Each undirected edge counted once.
  std::int64_t num_undirected_edges() const {
    return static_cast<std::int64_t>(neighbors_.size()) / 2;
  }

  const std::vector<int>& row_offsets() const { return offsets_; }
  const std::vector<int>& col_indices() const { return neighbors_; }

  bool is_symmetric() const {
    for (int v = 0; v < n_; ++v) {
      for (int u : neighbors(v)) {
        auto nu = neighbors(u);
        if (!std::binary_search(nu.begin(), nu.end(), v)) return false;
      }
    }
    return true;
  }

  /// Applies a node relabeling: new_of[v] is the new index of old node v.
  Graph permuted(const std::vector<int>& new_of) const {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(neighbors_.size());
    for (int v = 0; v < n_; ++v) {
      for (int u : neighbors(v)) {
        if (v < u) {
          edges.emplace_back(new_of[static_cast<std::size_t>(v)],
                             new_of[static_cast<std::size_t>(u)]);
        }
      }
    }
    return from_edges(edges, n_, {.symmetrize = true, .drop_self_loops = true});
  }

 private:
  void check_node(int v) const {
    if (v < 0 || v >= n_) {
      throw ContractError("graph: node " + std::to_string(v) + " outside [0," +
                          std::to_string(n_) + ")");
    }
  }

  int n_ = 0;
  std::vector<int> offsets_;    // length n+1, non-decreasing
  std::vector<int> neighbors_;  // sorted ascending per row
};

/// Fraction of undirected edges whose endpoints share a label.
inline double edge_homophily(const Graph& g, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != g.num_nodes()) {
    throw ContractError("edge_homophily: label count != node count");
  }
  for (int y : labels) {
    if (y < 0) throw ContractError("edge_homophily: negative label");
  }
  std::int64_t same = 0, total = 0;
  for (int v = 0; v < g.num_nodes(); ++v) {
    for (int u : g.neighbors(v)) {
      if (v < u) {
        ++total;
        if (labels[static_cast<std::size_t>(v)] == labels[static_cast<std::size_t>(u)]) ++same;
      }
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(same) / static_cast<double>(total);
}

/// BFS ball of radius k around v, inclusive; returned sorted.
inline std::vector<int> k_hop_ball(const Graph& g, int v, int k) {
  if (k < 0) throw ContractError("k_hop_ball: negative radius");
  if (v < 0 || v >= g.num_nodes()) {
    throw ContractError("k_hop_ball: node " + std::to_string(v) + " out of range");
  }
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(v)] = 0;
  q.push(v);
  std::vector<int> ball{v};
  while (!q.empty()) {
    const int cur = q.front();
    q.pop();
    if (dist[static_cast<std::size_t>(cur)] == k) continue;
    for (int u : g.neighbors(cur)) {
      if (dist[static_cast<std::size_t>(u)] < 0) {
        dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(cur)] + 1;
        ball.push_back(u);
        q.push(u);
      }
    }
  }
  std::sort(ball.begin(), ball.end());
  return ball;
}

/// Differentiable neighborhood mean: m_v = mean of h_u over u in N(v);
/// degree-0 nodes get the zero vector. With canonical_order the per-row
/// addends are summed in sorted-value order, which makes the result
/// invariant under node relabeling (bitwise); otherwise ascending neighbor
/// index is used.
template <class T>
Value<T> mean_aggregate(const Graph& g, Value<T> h, bool canonical_order = false) {
  Tape<T>& tape = *h.tape();
  const Index n = h.rows();
  if (n != g.num_nodes()) {
    throw DimensionError("mean_aggregate: feature rows " + shape_str(h.data()) +
                         " != node count " + std::to_string(g.num_nodes()));
  }
  const Index d = h.cols();
  Mat<T> out = Mat<T>::Zero(n, d);
  std::vector<T> addends;
  for (int v = 0; v < g.num_nodes(); ++v) {
    auto nb = g.neighbors(v);
    if (nb.empty()) continue;
    const T inv_deg = T(1) / static_cast<T>(nb.size());
    if (canonical_order) {
      for (Index j = 0; j < d; ++j) {
        addends.clear();
        for (int u : nb) addends.push_back(h.data()(u, j));
        std::sort(addends.begin(), addends.end());
        T acc = T(0);
        for (T a : addends) acc += a;
        out(v, j) = acc * inv_deg;
      }
    } else {
      for (int u : nb) out.row(v) += h.data().row(u);
      out.row(v) *= inv_deg;
    }
  }
  Value<T> m = tape.make(std::move(out), {h});
  tape.set_backward(m, [m, h, &g] {
    if (!h.requires_grad()) return;
    for (int v = 0; v < g.num_nodes(); ++v) {
      auto nb = g.neighbors(v);
      if (nb.empty()) continue;
      const T inv_deg = T(1) / static_cast<T>(nb.size());
      for (int u : nb) h.grad().row(u) += m.grad().row(v) * inv_deg;
    }
  });
  return m;
}

/// Erdős–Rényi graph (undirected, self-loop-free), for tests and audits.
inline Graph random_graph(int n, double edge_prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (unit(rng) < edge_prob) edges.emplace_back(u, v);
    }
  }
  return Graph::from_edges(edges, n);
}

}  // namespace ognn
