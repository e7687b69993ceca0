#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ognn/common.hpp"
#include "ognn/model.hpp"

namespace ognn {

/// Boxplot statistics of one gate channel over all nodes.
struct ChannelStats {
  int layer = 0;    // 1-based
  int channel = 0;  // 0-based
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw ContractError("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline std::vector<ChannelStats> gate_channel_stats(const GateTrace& trace) {
  std::vector<ChannelStats> out;
  for (std::size_t k = 0; k < trace.gates.size(); ++k) {
    const Matd& g = trace.gates[k];
    for (Index c = 0; c < g.cols(); ++c) {
      std::vector<double> xs(static_cast<std::size_t>(g.rows()));
      for (Index v = 0; v < g.rows(); ++v) xs[static_cast<std::size_t>(v)] = g(v, c);
      ChannelStats s;
      s.layer = static_cast<int>(k) + 1;
      s.channel = static_cast<int>(c);
      s.min = *std::min_element(xs.begin(), xs.end());
      s.max = *std::max_element(xs.begin(), xs.end());
      s.q1 = quantile(xs, 0.25);
      s.median = quantile(xs, 0.5);
      s.q3 = quantile(xs, 0.75);
      out.push_back(s);
    }
  }
  return out;
}

// gate-stats v1: tab-separated, one row per (layer, channel), full
// precision. Consumed by external plotters.
inline void write_gate_stats(const std::filesystem::path& path, const GateTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IngestError("gate stats: cannot write " + path.string());
  out << "# gate-stats v1\n";
  out << "layer\tchannel\tmin\tq1\tmedian\tq3\tmax\n";
  out.precision(17);
  for (const ChannelStats& s : gate_channel_stats(trace)) {
    out << s.layer << '\t' << s.channel << '\t' << s.min << '\t' << s.q1 << '\t' << s.median
        << '\t' << s.q3 << '\t' << s.max << '\n';
  }
}

// split-points v1: per node, the soft split-point estimate per layer
// (rowwise gate sums, in gate units).
inline void write_split_points(const std::filesystem::path& path, const GateTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IngestError("split points: cannot write " + path.string());
  out << "# split-points v1\n";
  out << "node";
  for (std::size_t k = 1; k <= trace.gates.size(); ++k) out << "\tlayer" << k;
  out << '\n';
  out.precision(17);
  const Matd s = trace.split_points();
  for (Index v = 0; v < s.rows(); ++v) {
    out << v;
    for (Index k = 0; k < s.cols(); ++k) out << '\t' << s(v, k);
    out << '\n';
  }
}

}  // namespace ognn
