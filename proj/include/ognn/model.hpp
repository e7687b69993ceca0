#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ognn/autodiff.hpp"
#include "ognn/common.hpp"
#include "ognn/graph.hpp"
#include "ognn/rng.hpp"

namespace ognn {

/// Ablation ladder: bare mean-aggregation, per-channel logistic gates,
/// ordered (cumax) gates, and ordered gates accumulated with the
/// differentiable OR.
enum class Variant { bare, simple_gating, ordered_gating, ordered_softor };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::bare: return "bare";
    case Variant::simple_gating: return "simple-gating";
    case Variant::ordered_gating: return "ordered-gating";
    case Variant::ordered_softor: return "ordered-softor";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "bare") return Variant::bare;
  if (s == "simple-gating") return Variant::simple_gating;
  if (s == "ordered-gating") return Variant::ordered_gating;
  if (s == "ordered-softor") return Variant::ordered_softor;
  throw ConfigError("unknown variant '" + s + "'");
}

struct ModelConfig {
  int layers = 8;           // K
  int hidden = 256;         // D
  int chunk_factor = 4;     // C; each gate drives C consecutive neurons
  int mlp_layers = 1;       // depth of the input projection
  bool tie_gates = false;   // share the gate map across layers
  int layernorm_every = 2;  // normalize h after layers k % this == 0; 0 disables
  double layernorm_eps = 1e-5;
  double dropout_theta = 0.0;
  double dropout_xi = 0.0;
  Variant variant = Variant::ordered_softor;
  int num_classes = 0;
  int in_features = 0;
  bool sparse_input = false;  // fast path for sparse feature matrices

  int gate_dim() const { return hidden / chunk_factor; }  // D_m

  int norm_count() const {
    return layernorm_every > 0 ? layers / layernorm_every : 0;
  }

  void validate() const {
    if (layers < 0) throw ConfigError("model: layers must be >= 0");
    if (hidden < 1) throw ConfigError("model: hidden must be >= 1");
    if (chunk_factor < 1 || hidden % chunk_factor != 0) {
      throw ConfigError("model: chunk factor " + std::to_string(chunk_factor) +
                        " must divide hidden " + std::to_string(hidden));
    }
    if (mlp_layers < 1) throw ConfigError("model: mlp layers must be >= 1");
    if (layernorm_every < 0) throw ConfigError("model: layernorm-every must be >= 0");
    if (layernorm_every > 0 && hidden < 2) {
      throw ConfigError("model: layernorm needs hidden >= 2");
    }
    if (dropout_theta < 0 || dropout_theta >= 1 || dropout_xi < 0 || dropout_xi >= 1) {
      throw ConfigError("model: dropout rates must lie in [0,1)");
    }
    if (num_classes < 1) throw ConfigError("model: num-classes must be >= 1");
    if (in_features < 1) throw ConfigError("model: in-features must be >= 1");
  }
};

enum class ParamGroup { theta, xi };

/// Visits every parameter field in a fixed order shared by the optimizer,
/// the checkpoint format and gradient readout. P is ModelParams<T> (fields
/// are matrices) or BoundParams<T> (fields are tape values).
template <class P, class F>
void visit_params(P& p, F&& f) {
  for (std::size_t i = 0; i < p.theta_w.size(); ++i) {
    f("theta.w" + std::to_string(i), ParamGroup::theta, p.theta_w[i]);
    f("theta.b" + std::to_string(i), ParamGroup::theta, p.theta_b[i]);
  }
  for (std::size_t k = 0; k < p.gate_w.size(); ++k) {
    f("gate.w" + std::to_string(k), ParamGroup::xi, p.gate_w[k]);
    f("gate.b" + std::to_string(k), ParamGroup::xi, p.gate_b[k]);
  }
  for (std::size_t j = 0; j < p.norm_gain.size(); ++j) {
    f("norm.gain" + std::to_string(j), ParamGroup::theta, p.norm_gain[j]);
    f("norm.bias" + std::to_string(j), ParamGroup::theta, p.norm_bias[j]);
  }
  f("head.w", ParamGroup::theta, p.head_w);
  f("head.b", ParamGroup::theta, p.head_b);
}

template <class T>
struct BoundParams {
  std::vector<Value<T>> theta_w, theta_b;
  std::vector<Value<T>> gate_w, gate_b;
  std::vector<Value<T>> norm_gain, norm_bias;
  Value<T> head_w, head_b;
};

template <class T>
struct ModelParams {
  std::vector<Mat<T>> theta_w, theta_b;    // mlp_layers maps, F->D then D->D
  std::vector<Mat<T>> gate_w, gate_b;      // 2D->D_m per layer (one pair if tied)
  std::vector<Mat<T>> norm_gain, norm_bias;
  Mat<T> head_w, head_b;                   // D -> classes

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    std::mt19937_64 rng(splitmix64(seed ^ 0xa02c7e1fdb5a93ULL));
    auto uniform_fan_in = [&rng](Index rows, Index cols, Index fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Mat<T> m(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<T>(dist(rng));
      }
      return m;
    };
    const int d = cfg.hidden;
    for (int l = 0; l < cfg.mlp_layers; ++l) {
      const int fan_in = l == 0 ? cfg.in_features : d;
      p.theta_w.push_back(uniform_fan_in(fan_in, d, fan_in));
      p.theta_b.push_back(uniform_fan_in(1, d, fan_in));
    }
    if (cfg.variant != Variant::bare && cfg.layers > 0) {
      const int maps = cfg.tie_gates ? 1 : cfg.layers;
      for (int k = 0; k < maps; ++k) {
        p.gate_w.push_back(uniform_fan_in(2 * d, cfg.gate_dim(), 2 * d));
        p.gate_b.push_back(uniform_fan_in(1, cfg.gate_dim(), 2 * d));
      }
    }
    for (int j = 0; j < cfg.norm_count(); ++j) {
      p.norm_gain.push_back(Mat<T>::Ones(1, d));
      p.norm_bias.push_back(Mat<T>::Zero(1, d));
    }
    p.head_w = uniform_fan_in(d, cfg.num_classes, d);
    p.head_b = uniform_fan_in(1, cfg.num_classes, d);
    return p;
  }

  BoundParams<T> bind(Tape<T>& tape) const {
    BoundParams<T> b;
    for (const auto& m : theta_w) b.theta_w.push_back(tape.leaf(m));
    for (const auto& m : theta_b) b.theta_b.push_back(tape.leaf(m));
    for (const auto& m : gate_w) b.gate_w.push_back(tape.leaf(m));
    for (const auto& m : gate_b) b.gate_b.push_back(tape.leaf(m));
    for (const auto& m : norm_gain) b.norm_gain.push_back(tape.leaf(m));
    for (const auto& m : norm_bias) b.norm_bias.push_back(tape.leaf(m));
    b.head_w = tape.leaf(head_w);
    b.head_b = tape.leaf(head_b);
    return b;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    visit_params(const_cast<ModelParams&>(*this),
                 [&n](const std::string&, ParamGroup, const Mat<T>& m) {
                   n += static_cast<std::size_t>(m.size());
                 });
    return n;
  }
};

/// Per-layer gate vectors recorded during an eval-mode forward pass.
/// For the ordered-softor variant, gates[k] holds the accumulated gate and
/// raw[k] the cumax output before the OR.
struct GateTrace {
  std::vector<Matd> gates;  // K matrices, N x D_m
  std::vector<Matd> raw;

  /// Soft split-point estimate per node and layer, in gate units:
  /// s_v^(k) = sum_l gate[k](v,l).
  Matd split_points() const {
    if (gates.empty()) return {};
    Matd s(gates.front().rows(), static_cast<Index>(gates.size()));
    for (std::size_t k = 0; k < gates.size(); ++k) {
      s.col(static_cast<Index>(k)) = gates[k].rowwise().sum();
    }
    return s;
  }
};

namespace detail {

/// min(x, 1): trims fp dust above 1 from partial softmax sums so gate
/// values satisfy the [0,1] contract exactly. Gradient passes through
/// unchanged; the trim only ever moves values by an ulp.
template <class T>
Value<T> saturate_unit(Value<T> x) {
  Tape<T>& tape = *x.tape();
  Value<T> v = tape.make(x.data().cwiseMin(T(1)), {x});
  tape.set_backward(v, [v, x] {
    if (x.requires_grad()) x.grad() += v.grad();
  });
  return v;
}

}  // namespace detail

/// cumax with right-to-left cumulation: row-wise softmax followed by a
/// reverse cumulative sum. Rows are non-increasing with first entry 1.
template <class T>
Value<T> cumax_left(Value<T> logits) {
  return detail::saturate_unit(cumsum_reverse(row_softmax(logits)));
}

/// Differentiable OR: a + (1-a) o b. Output dominates both inputs
/// elementwise and stays in [0,1].
template <class T>
Value<T> softor(Value<T> g_prev, Value<T> g_hat) {
  detail::check_same_shape(g_prev, g_hat, "softor");
#ifndef NDEBUG
  auto in_unit = [](const Mat<T>& m) {
    return (m.array() >= T(0)).all() && (m.array() <= T(1)).all();
  };
  if (!in_unit(g_prev.data()) || !in_unit(g_hat.data())) {
    throw ContractError("softor: inputs must lie in [0,1]");
  }
#endif
  return detail::saturate_unit(add(g_prev, mul(one_minus(g_prev), g_hat)));
}

/// Repeats every gate entry across its block of C consecutive neurons.
template <class T>
Value<T> expand_chunks(Value<T> g, int chunk_factor) {
  if (chunk_factor < 1) {
    throw ConfigError("expand_chunks: chunk factor must be >= 1");
  }
  if (chunk_factor == 1) return g;
  Tape<T>& tape = *g.tape();
  const Index n = g.rows(), dm = g.cols();
  Mat<T> out(n, dm * chunk_factor);
  for (Index l = 0; l < dm; ++l) {
    for (int c = 0; c < chunk_factor; ++c) {
      out.col(l * chunk_factor + c) = g.data().col(l);
    }
  }
  Value<T> v = tape.make(std::move(out), {g});
  tape.set_backward(v, [v, g, chunk_factor, dm] {
    if (!g.requires_grad()) return;
    for (Index l = 0; l < dm; ++l) {
      for (int c = 0; c < chunk_factor; ++c) {
        g.grad().col(l) += v.grad().col(l * chunk_factor + c);
      }
    }
  });
  return v;
}

/// h = g o h_prev + (1-g) o m.
template <class T>
Value<T> combine(Value<T> g_expanded, Value<T> h_prev, Value<T> m) {
  detail::check_same_shape(g_expanded, h_prev, "combine");
  detail::check_same_shape(g_expanded, m, "combine");
  return add(mul(g_expanded, h_prev), mul(one_minus(g_expanded), m));
}

/// x*W + b with the bias row broadcast explicitly via a ones column.
template <class T>
Value<T> affine(Value<T> x, Value<T> w, Value<T> b) {
  Tape<T>& tape = *x.tape();
  Value<T> ones = tape.constant(Mat<T>::Ones(x.rows(), 1));
  return add(matmul(x, w), matmul(ones, b));
}

namespace detail {

/// First projection layer for sparse feature matrices: computes
/// dropout(X)*W + b touching only the nonzeros of X. Dropout draws one
/// keep decision per nonzero (zero entries are unaffected by dropout
/// either way), in row-major nonzero order.
template <class T>
Value<T> sparse_dropout_affine(Tape<T>& tape, const Matd& x, Value<T> w, Value<T> b,
                               double rate, std::mt19937_64& stream, bool training) {
  const Index n = x.rows(), f = x.cols(), d = w.cols();
  if (w.rows() != f) {
    throw DimensionError("sparse input: feature width " + std::to_string(f) +
                         " != weight rows " + std::to_string(w.rows()));
  }
  struct Entry {
    int row, col;
    T value;  // after dropout scaling
  };
  std::vector<Entry> nz;
  const bool drop = training && rate > 0.0;
  const T scale = drop ? T(1.0 / (1.0 - rate)) : T(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < f; ++j) {
      const double v = x(i, j);
      if (v == 0.0) continue;
      if (drop && unit(stream) < rate) continue;
      nz.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<T>(v) * scale});
    }
  }
  Mat<T> out(n, d);
  out.rowwise() = b.data().row(0);
  for (const Entry& e : nz) out.row(e.row) += e.value * w.data().row(e.col);
  Value<T> v = tape.make(std::move(out), {w, b});
  tape.set_backward(v, [v, w, b, nz = std::move(nz)] {
    if (w.requires_grad()) {
      for (const Entry& e : nz) w.grad().row(e.col) += e.value * v.grad().row(e.row);
    }
    if (b.requires_grad()) b.grad().row(0) += v.grad().colwise().sum();
  });
  return v;
}

}  // namespace detail

struct ForwardOptions {
  bool training = false;
  bool record_gates = false;
  bool canonical_aggregation = false;  // order-invariant neighborhood sums
};

/// Z = MLP(X): relu between hidden maps, input and hidden activations
/// dropped out in training mode.
template <class T>
Value<T> input_projection(Tape<T>& tape, const BoundParams<T>& bp, const ModelConfig& cfg,
                          const Matd& x, const ForwardOptions& opt, RngPool& rng) {
  if (x.cols() != cfg.in_features) {
    throw DimensionError("input projection: features " + shape_str(x) + " != configured width " +
                         std::to_string(cfg.in_features));
  }
  Value<T> z;
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    auto& stream = rng.stream("dropout/theta/l" + std::to_string(l));
    if (l == 0) {
      if (cfg.sparse_input) {
        z = detail::sparse_dropout_affine(tape, x, bp.theta_w[0], bp.theta_b[0],
                                          cfg.dropout_theta, stream, opt.training);
      } else {
        Value<T> xin = tape.constant(x.cast<T>());
        xin = dropout(xin, cfg.dropout_theta, stream, opt.training);
        z = affine(xin, bp.theta_w[0], bp.theta_b[0]);
      }
    } else {
      z = relu(z);
      z = dropout(z, cfg.dropout_theta, stream, opt.training);
      z = affine(z, bp.theta_w[static_cast<std::size_t>(l)],
                 bp.theta_b[static_cast<std::size_t>(l)]);
    }
  }
  return z;
}

/// Gate network input: dropout over [h_prev; m], then the layer-k (or
/// shared) linear map to D_m logits. Layers are 1-based.
template <class T>
Value<T> gate_logits(Tape<T>& tape, const BoundParams<T>& bp, const ModelConfig& cfg, int k,
                     Value<T> h_prev, Value<T> m, const ForwardOptions& opt, RngPool& rng) {
  (void)tape;
  if (cfg.variant == Variant::bare) {
    throw ContractError("gate_logits: bare variant has no gate network");
  }
  Value<T> cat = concat_features(h_prev, m);
  auto& stream = rng.stream("dropout/xi/layer" + std::to_string(k));
  cat = dropout(cat, cfg.dropout_xi, stream, opt.training);
  const std::size_t idx = cfg.tie_gates ? 0 : static_cast<std::size_t>(k - 1);
  return affine(cat, bp.gate_w[idx], bp.gate_b[idx]);
}

template <class T>
struct LayerOutput {
  Value<T> h;
  Value<T> gate;      // the gate used by the combine; invalid for bare
  Value<T> gate_raw;  // cumax output before the OR; invalid unless ordered-softor
};

/// One message-passing layer with variant dispatch; LayerNorm applied when
/// k is a multiple of layernorm-every.
template <class T>
LayerOutput<T> forward_layer(Tape<T>& tape, const BoundParams<T>& bp, const ModelConfig& cfg,
                             const Graph& graph, int k, Value<T> g_prev_tilde, Value<T> h_prev,
                             const ForwardOptions& opt, RngPool& rng) {
  Value<T> m = mean_aggregate(graph, h_prev, opt.canonical_aggregation);
  LayerOutput<T> out;
  switch (cfg.variant) {
    case Variant::bare:
      out.h = m;
      break;
    case Variant::simple_gating: {
      Value<T> g = sigmoid(gate_logits(tape, bp, cfg, k, h_prev, m, opt, rng));
      out.gate = g;
      out.h = combine(expand_chunks(g, cfg.chunk_factor), h_prev, m);
      break;
    }
    case Variant::ordered_gating: {
      Value<T> g = cumax_left(gate_logits(tape, bp, cfg, k, h_prev, m, opt, rng));
      out.gate = g;
      out.h = combine(expand_chunks(g, cfg.chunk_factor), h_prev, m);
      break;
    }
    case Variant::ordered_softor: {
      Value<T> ghat = cumax_left(gate_logits(tape, bp, cfg, k, h_prev, m, opt, rng));
      Value<T> gt = softor(g_prev_tilde, ghat);
      out.gate = gt;
      out.gate_raw = ghat;
      out.h = combine(expand_chunks(gt, cfg.chunk_factor), h_prev, m);
      break;
    }
    default:
      throw ConfigError("forward_layer: unknown variant");
  }
  if (cfg.layernorm_every > 0 && k % cfg.layernorm_every == 0) {
    const std::size_t j = static_cast<std::size_t>(k / cfg.layernorm_every - 1);
    out.h = layer_norm(out.h, bp.norm_gain[j], bp.norm_bias[j],
                       static_cast<T>(cfg.layernorm_eps));
  }
  return out;
}

template <class T>
struct ForwardResult {
  Value<T> logits;
  GateTrace trace;
};

/// Full forward pass: input projection, K gated message-passing layers,
/// linear classifier head. Gate recording is an eval-mode facility.
template <class T>
ForwardResult<T> forward_model(Tape<T>& tape, const BoundParams<T>& bp, const ModelConfig& cfg,
                               const Graph& graph, const Matd& x, const ForwardOptions& opt,
                               RngPool& rng) {
  if (graph.num_nodes() != static_cast<int>(x.rows())) {
    throw DimensionError("forward: feature rows " + shape_str(x) + " != graph nodes " +
                         std::to_string(graph.num_nodes()));
  }
  if (opt.record_gates && opt.training) {
    throw ConfigError("forward: gate recording is only available in eval mode");
  }
  ForwardResult<T> result;
  Value<T> h = input_projection(tape, bp, cfg, x, opt, rng);
  Value<T> g_tilde =
      tape.constant(Mat<T>::Zero(graph.num_nodes(), cfg.gate_dim()));  // g̃^(0) := 0
  for (int k = 1; k <= cfg.layers; ++k) {
    LayerOutput<T> layer = forward_layer(tape, bp, cfg, graph, k, g_tilde, h, opt, rng);
    h = layer.h;
    if (layer.gate.valid()) g_tilde = layer.gate;
    if (opt.record_gates && layer.gate.valid()) {
      result.trace.gates.push_back(layer.gate.data().template cast<double>());
      if (layer.gate_raw.valid()) {
        result.trace.raw.push_back(layer.gate_raw.data().template cast<double>());
      }
    }
  }
  result.logits = affine(h, bp.head_w, bp.head_b);
  return result;
}

template <class T>
struct Model {
  ModelConfig config;
  ModelParams<T> params;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    return {cfg, ModelParams<T>::init(cfg, seed)};
  }
};

/// Eval-mode logits as a plain matrix (no gradient bookkeeping kept).
template <class T>
Matd eval_logits(const Model<T>& model, const Graph& graph, const Matd& x, RngPool& rng,
                 bool canonical_aggregation = false, GateTrace* trace = nullptr) {
  Tape<T> tape;
  BoundParams<T> bp = model.params.bind(tape);
  ForwardOptions opt;
  opt.training = false;
  opt.record_gates = trace != nullptr;
  opt.canonical_aggregation = canonical_aggregation;
  ForwardResult<T> r = forward_model(tape, bp, model.config, graph, x, opt, rng);
  if (trace) *trace = std::move(r.trace);
  return r.logits.data().template cast<double>();
}

}  // namespace ognn
