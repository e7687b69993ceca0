#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ognn/common.hpp"
#include "ognn/graph.hpp"
#include "ognn/model.hpp"

// Independent verification harness. Reference values here come from
// forward evaluations, explicit enumeration and all-pairs shortest paths;
// the tape's backward is never consulted for a reference.

namespace ognn::oracle {

struct ParamCheck {
  std::string name;
  double max_rel_err = 0.0;
  Index row = 0, col = 0;  // offending entry
  double step = 0.0;
};

struct GradReport {
  std::vector<ParamCheck> params;  // sorted by error, worst first
  double max_rel_err = 0.0;

  bool pass(double tolerance) const { return max_rel_err <= tolerance; }
};

struct GradSlotView {
  std::string name;
  Matd* value = nullptr;          // perturbed in place and restored
  const Matd* autodiff_grad = nullptr;
};

/// Central finite differences per scalar parameter against tape gradients.
/// The loss builder must be deterministic; two baseline evaluations are
/// compared to enforce that. Relative step: rel_step * max(1, |w|).
inline GradReport finite_diff_check(const std::function<double()>& loss_builder,
                                    std::vector<GradSlotView> slots,
                                    double rel_step = 1e-5, double floor = 1e-12) {
  const double base1 = loss_builder();
  const double base2 = loss_builder();
  if (std::memcmp(&base1, &base2, sizeof(double)) != 0) {
    throw ContractError("finite_diff_check: loss builder is not deterministic (" +
                        std::to_string(base1) + " vs " + std::to_string(base2) + ")");
  }
  GradReport report;
  for (GradSlotView& slot : slots) {
    ParamCheck check;
    check.name = slot.name;
    Matd& w = *slot.value;
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) {
        const double orig = w(i, j);
        const double h = rel_step * std::max(1.0, std::abs(orig));
        w(i, j) = orig + h;
        const double up = loss_builder();
        w(i, j) = orig - h;
        const double down = loss_builder();
        w(i, j) = orig;
        const double fd = (up - down) / (2.0 * h);
        const double ad = (*slot.autodiff_grad)(i, j);
        const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
        if (rel > check.max_rel_err) {
          check.max_rel_err = rel;
          check.row = i;
          check.col = j;
          check.step = h;
        }
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
    report.params.push_back(std::move(check));
  }
  std::sort(report.params.begin(), report.params.end(),
            [](const ParamCheck& a, const ParamCheck& b) { return a.max_rel_err > b.max_rel_err; });
  return report;
}

struct AuditReport {
  std::string property;
  int trials = 0;
  int failures = 0;
  std::string worst_witness;  // replayable description of the first failure

  bool ok() const { return failures == 0; }
};

/// All-pairs hop distances by Floyd–Warshall; the reference for ball
/// membership, independent of the BFS in the graph module.
inline std::vector<std::vector<int>> hop_distances(const Graph& g) {
  const int n = g.num_nodes();
  const int inf = n + 1;
  std::vector<std::vector<int>> dist(static_cast<std::size_t>(n),
                                     std::vector<int>(static_cast<std::size_t>(n), inf));
  for (int v = 0; v < n; ++v) {
    dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(v)] = 0;
    for (int u : g.neighbors(v)) dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = 1;
  }
  for (int m = 0; m < n; ++m) {
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const int via = dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(m)] +
                        dist[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)];
        if (via < dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]) {
          dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = via;
        }
      }
    }
  }
  return dist;
}

/// Perturbs features of nodes outside the k-hop ball of v and asserts
/// h_v^(k) is bitwise unchanged; perturbs inside-ball nodes and expects a
/// change for at least one sampled delta. `embed` maps a feature matrix to
/// the layer-k embeddings (dropout off, deterministic mode).
inline AuditReport receptive_field_audit(const std::function<Matd(const Matd&)>& embed,
                                         const Graph& g, const Matd& x0, int k, int trials,
                                         std::mt19937_64& rng) {
  AuditReport report;
  report.property = "receptive_field(k=" + std::to_string(k) + ")";
  const auto dist = hop_distances(g);
  const Matd h0 = embed(x0);
  std::uniform_int_distribution<int> node(0, g.num_nodes() - 1);
  std::uniform_real_distribution<double> delta(0.5, 1.5);
  for (int t = 0; t < trials; ++t) {
    const int v = node(rng);
    const int u = node(rng);
    const int d = dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)];
    Matd x = x0;
    for (Index j = 0; j < x.cols(); ++j) x(u, j) += delta(rng);
    const Matd h = embed(x);
    ++report.trials;
    const bool outside = d > k;
    const bool unchanged = (h.row(v).array() == h0.row(v).array()).all();
    if (outside && !unchanged) {
      ++report.failures;
      if (report.worst_witness.empty()) {
        std::ostringstream os;
        os << "outside-ball influence: v=" << v << " u=" << u << " hop=" << d << " k=" << k;
        report.worst_witness = os.str();
      }
    }
  }
  // Influence side: each trial picks a direct neighbor, which must be able
  // to reach v for at least one of a few sampled deltas.
  for (int t = 0; t < trials && k >= 1; ++t) {
    const int v = node(rng);
    auto nb = g.neighbors(v);
    if (nb.empty()) continue;
    const int u = nb[static_cast<std::size_t>(
        std::uniform_int_distribution<int>(0, static_cast<int>(nb.size()) - 1)(rng))];
    bool influenced = false;
    for (int attempt = 0; attempt < 4 && !influenced; ++attempt) {
      Matd x = x0;
      const double scale = std::pow(10.0, attempt);
      for (Index j = 0; j < x.cols(); ++j) x(u, j) += delta(rng) * scale;
      influenced = !(embed(x).row(v).array() == h0.row(v).array()).all();
    }
    ++report.trials;
    if (!influenced) {
      ++report.failures;
      if (report.worst_witness.empty()) {
        report.worst_witness = "neighbor without influence: v=" + std::to_string(v) +
                               " u=" + std::to_string(u);
      }
    }
  }
  return report;
}

/// Expectation of the ordered gate by explicit enumeration of the
/// categorical split-point distribution: gate[l] = sum_{i >= l} p(P = i).
inline std::vector<double> enumerate_gate_expectation(const std::vector<double>& logits) {
  const std::size_t d = logits.size();
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(d);
  double z = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& pi : p) pi /= z;
  std::vector<double> gate(d, 0.0);
  for (std::size_t l = 0; l < d; ++l) {
    double acc = 0.0;
    for (std::size_t i = l; i < d; ++i) acc += p[i];  // disjunction over P >= l
    gate[l] = acc;
  }
  return gate;
}

struct GateLawOptions {
  int trials = 10000;
  int gate_dim = 8;
  double enum_tol = 1e-12;
  double first_entry_tol = 1e-9;
};

/// Random-row audit of the gate laws: enumeration identity, range, index
/// monotonicity, layer monotonicity of the OR accumulation, and existence
/// witnesses for both orderings of the per-index saturation deltas.
inline AuditReport gate_law_audit(const GateLawOptions& opt, std::mt19937_64& rng) {
  AuditReport report;
  report.property = "gate_laws";
  std::uniform_real_distribution<double> logit(-6.0, 6.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto fail = [&report](const std::string& what) {
    ++report.failures;
    if (report.worst_witness.empty()) report.worst_witness = what;
  };

  Matd prev_gate;  // accumulated OR chain, reset periodically to act as layers
  for (int t = 0; t < opt.trials; ++t) {
    Matd row(1, opt.gate_dim);
    std::vector<double> raw(static_cast<std::size_t>(opt.gate_dim));
    for (int j = 0; j < opt.gate_dim; ++j) {
      raw[static_cast<std::size_t>(j)] = logit(rng);
      row(0, j) = raw[static_cast<std::size_t>(j)];
    }
    Tape<double> tape;
    Value<double> ghat = cumax_left(tape.constant(row));
    const Matd& gh = ghat.data();
    ++report.trials;

    const std::vector<double> expect = enumerate_gate_expectation(raw);
    for (int j = 0; j < opt.gate_dim; ++j) {
      if (std::abs(gh(0, j) - expect[static_cast<std::size_t>(j)]) > opt.enum_tol) {
        fail("enumeration identity at index " + std::to_string(j) + " trial " +
             std::to_string(t));
      }
      if (gh(0, j) < 0.0 || gh(0, j) > 1.0) {
        fail("range violation at index " + std::to_string(j) + " trial " + std::to_string(t));
      }
      if (j + 1 < opt.gate_dim && gh(0, j) < gh(0, j + 1)) {
        fail("index monotonicity violated at " + std::to_string(j) + " trial " +
             std::to_string(t));
      }
    }
    if (std::abs(gh(0, 0) - 1.0) > opt.first_entry_tol) {
      fail("first gate entry " + std::to_string(gh(0, 0)) + " != 1 at trial " +
           std::to_string(t));
    }

    // SOFTOR layer chain: delta must be elementwise >= 0, exactly.
    if (prev_gate.size() == 0 || unit(rng) < 0.1) {
      prev_gate = Matd::Zero(1, opt.gate_dim);
    }
    Value<double> gprev = tape.constant(prev_gate);
    Value<double> gt = softor(gprev, ghat);
    for (int j = 0; j < opt.gate_dim; ++j) {
      if (gt.data()(0, j) < prev_gate(0, j)) {
        fail("layer monotonicity violated at index " + std::to_string(j) + " trial " +
             std::to_string(t));
      }
      if (gt.data()(0, j) < 0.0 || gt.data()(0, j) > 1.0) {
        fail("softor range violation at trial " + std::to_string(t));
      }
    }
    prev_gate = gt.data();
  }

  // Flexibility: with g̃ fixed and non-saturated, the next-layer logits can
  // make the saturation delta at index i exceed the one at j > i, and the
  // other way around. Delta = (1 - g̃) o ĝ(next logits).
  {
    const int i = 0, j = opt.gate_dim - 1;
    Matd gprev_row(1, opt.gate_dim);
    for (int l = 0; l < opt.gate_dim; ++l) gprev_row(0, l) = 0.3;
    auto delta_at = [&](int mass_index, double& di, double& dj) {
      Matd logits_row = Matd::Zero(1, opt.gate_dim);
      logits_row(0, mass_index) = 12.0;
      Tape<double> tape;
      Value<double> ghat = cumax_left(tape.constant(logits_row));
      di = (1.0 - gprev_row(0, i)) * ghat.data()(0, i);
      dj = (1.0 - gprev_row(0, j)) * ghat.data()(0, j);
    };
    double di = 0, dj = 0;
    ++report.trials;
    // split-point mass between i and j: index i saturates faster than j
    delta_at(opt.gate_dim / 2, di, dj);
    if (!(di > dj)) fail("flexibility witness di>dj not found");
    ++report.trials;
    // mass at j opens both gates; with g̃ tilted toward i the delta at j
    // becomes the larger one
    gprev_row(0, i) = 0.9;
    delta_at(j, di, dj);
    if (!(dj > di)) fail("flexibility witness dj>di not found");
  }
  return report;
}

/// Relabels nodes with random permutations and asserts the permuted-input
/// logits equal the permuted original logits bitwise (deterministic mode).
inline AuditReport permutation_audit(
    const std::function<Matd(const Graph&, const Matd&)>& logits_fn, const Graph& g,
    const Matd& x, int trials, std::mt19937_64& rng) {
  AuditReport report;
  report.property = "permutation_equivariance";
  const Matd base = logits_fn(g, x);
  std::vector<int> perm(static_cast<std::size_t>(g.num_nodes()));
  for (int t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Graph pg = g.permuted(perm);
    Matd px(x.rows(), x.cols());
    for (Index v = 0; v < x.rows(); ++v) px.row(perm[static_cast<std::size_t>(v)]) = x.row(v);
    const Matd plogits = logits_fn(pg, px);
    ++report.trials;
    bool equal = true;
    for (Index v = 0; v < x.rows() && equal; ++v) {
      equal = (plogits.row(perm[static_cast<std::size_t>(v)]).array() == base.row(v).array()).all();
    }
    if (!equal) {
      ++report.failures;
      if (report.worst_witness.empty()) {
        std::ostringstream os;
        os << "permutation trial " << t << ": [";
        for (std::size_t i = 0; i < perm.size(); ++i) os << (i ? "," : "") << perm[i];
        os << "]";
        report.worst_witness = os.str();
      }
    }
  }
  return report;
}

}  // namespace ognn::oracle
