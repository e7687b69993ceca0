#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ognn/common.hpp"

namespace ognn {

template <class T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; the tape owns the storage.
template <class T>
class Value {
 public:
  Value() = default;

  const Mat<T>& data() const;
  Mat<T>& grad() const;
  bool requires_grad() const;
  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }
  int id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Value(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are recorded in creation order, which is a
/// topological order of the computation; backward sweeps that order in
/// reverse. Single-owner: one forward/backward cycle at a time, no
/// concurrent mutation.
template <class T>
class Tape {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value<T> leaf(Mat<T> data, bool requires_grad = true) {
    return push(std::move(data), {}, requires_grad);
  }

  Value<T> constant(Mat<T> data) { return leaf(std::move(data), false); }

  /// Extension point for domain ops (graph aggregation, chunk expansion):
  /// record a node with explicit parents, then attach its backward with
  /// set_backward. The backward closure reads out.grad() and accumulates
  /// into each requires-grad parent.
  Value<T> make(Mat<T> data, std::initializer_list<Value<T>> parents) {
    bool rg = false;
    std::vector<int> ids;
    ids.reserve(parents.size());
    for (const Value<T>& p : parents) {
      check_owned(p);
      rg = rg || p.requires_grad();
      ids.push_back(p.id());
    }
    return push(std::move(data), std::move(ids), rg);
  }

  void set_backward(Value<T> v, std::function<void()> fn) {
    check_owned(v);
    nodes_[static_cast<std::size_t>(v.id())].backward = std::move(fn);
  }

  /// Seeds the scalar loss with gradient 1 and sweeps the tape in reverse
  /// creation order. A second sweep without zero_grad() is a state error.
  void backward(Value<T> loss) {
    check_owned(loss);
    const Node& ln = nodes_[static_cast<std::size_t>(loss.id())];
    if (ln.data.rows() != 1 || ln.data.cols() != 1) {
      throw ContractError("backward: loss must be 1x1, got " + shape_str(ln.data));
    }
    if (backward_done_) {
      throw StateError("backward: tape already swept; call zero_grad() first");
    }
    backward_done_ = true;
    last_sweep_visits_ = 0;
    nodes_[static_cast<std::size_t>(loss.id())].grad(0, 0) = T(1);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.requires_grad) {
        ++n.visits;
        ++last_sweep_visits_;
        n.backward();
      }
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) {
      n.grad.setZero();
      n.visits = 0;
    }
    backward_done_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_sweep_visits() const { return last_sweep_visits_; }
  int visits(Value<T> v) const { return nodes_[static_cast<std::size_t>(v.id())].visits; }

  const Mat<T>& data(int id) const { return nodes_[static_cast<std::size_t>(id)].data; }
  Mat<T>& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Mat<T> data;
    Mat<T> grad;  // same shape as data at all times
    std::vector<int> parents;
    std::function<void()> backward;  // empty for leaves
    bool requires_grad = false;
    int visits = 0;
  };

  Value<T> push(Mat<T> data, std::vector<int> parents, bool requires_grad) {
    Node n;
    n.grad = Mat<T>::Zero(data.rows(), data.cols());
    n.data = std::move(data);
    n.parents = std::move(parents);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Value<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  void check_owned(Value<T> v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw ContractError("value does not belong to this tape");
    }
  }

  std::deque<Node> nodes_;  // deque: stable storage, handles never dangle
  bool backward_done_ = false;
  std::size_t last_sweep_visits_ = 0;
};

template <class T>
const Mat<T>& Value<T>::data() const {
  return tape_->data(id_);
}
template <class T>
Mat<T>& Value<T>::grad() const {
  return tape_->grad(id_);
}
template <class T>
bool Value<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

namespace detail {

template <class T>
Tape<T>& same_tape(Value<T> a, Value<T> b, const char* op) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator set
// ---------------------------------------------------------------------------

template <class T>
Value<T> matmul(Value<T> a, Value<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.data()) + " * " +
                         shape_str(b.data()));
  }
  Mat<T> out = a.data() * b.data();
  Value<T> v = tape.make(std::move(out), {a, b});
  tape.set_backward(v, [v, a, b] {
    if (a.requires_grad()) a.grad().noalias() += v.grad() * b.data().transpose();
    if (b.requires_grad()) b.grad().noalias() += a.data().transpose() * v.grad();
  });
  return v;
}

template <class T>
Value<T> row_softmax(Value<T> x) {
  Tape<T>& tape = *x.tape();
  if (!x.data().allFinite()) {
    throw NumericError("row_softmax: non-finite input");
  }
  Mat<T> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const T mx = x.data().row(i).maxCoeff();
    out.row(i) = (x.data().row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  Value<T> v = tape.make(std::move(out), {x});
  tape.set_backward(v, [v, x] {
    if (!x.requires_grad()) return;
    const Mat<T>& s = v.data();
    const Mat<T>& g = v.grad();
    for (Index i = 0; i < s.rows(); ++i) {
      const T dot = g.row(i).cwiseProduct(s.row(i)).sum();
      x.grad().row(i).array() += s.row(i).array() * (g.row(i).array() - dot);
    }
  });
  return v;
}

/// out[i][l] = sum_{j >= l} x[i][j]; cumulation runs right to left.
template <class T>
Value<T> cumsum_reverse(Value<T> x) {
  Tape<T>& tape = *x.tape();
  Mat<T> out(x.rows(), x.cols());
  const Index d = x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    T acc = T(0);
    for (Index j = d - 1; j >= 0; --j) {
      acc += x.data()(i, j);
      out(i, j) = acc;
    }
  }
  Value<T> v = tape.make(std::move(out), {x});
  // Backward of a reverse cumsum is a forward cumsum of the incoming grad.
  tape.set_backward(v, [v, x] {
    if (!x.requires_grad()) return;
    const Mat<T>& g = v.grad();
    for (Index i = 0; i < g.rows(); ++i) {
      T acc = T(0);
      for (Index j = 0; j < g.cols(); ++j) {
        acc += g(i, j);
        x.grad()(i, j) += acc;
      }
    }
  });
  return v;
}

/// Per-row standardization (population variance + eps) with affine gain/bias.
template <class T>
Value<T> layer_norm(Value<T> x, Value<T> gain, Value<T> bias, T eps) {
  Tape<T>& tape = detail::same_tape(x, gain, "layer_norm");
  detail::same_tape(x, bias, "layer_norm");
  const Index d = x.cols();
  if (d < 2) {
    throw ConfigError("layer_norm: needs at least 2 features, got " + shape_str(x.data()));
  }
  if (eps <= T(0)) throw ConfigError("layer_norm: eps must be positive");
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw DimensionError("layer_norm: gain/bias must be [1x" + std::to_string(d) + "], got " +
                         shape_str(gain.data()) + " and " + shape_str(bias.data()));
  }
  Mat<T> xhat(x.rows(), d);
  Mat<T> inv_sigma(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    const T mu = x.data().row(i).mean();
    const T var = (x.data().row(i).array() - mu).square().sum() / static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma(i, 0) = is;
    xhat.row(i) = (x.data().row(i).array() - mu) * is;
  }
  Mat<T> out(x.rows(), d);
  for (Index i = 0; i < x.rows(); ++i) {
    out.row(i) = xhat.row(i).cwiseProduct(gain.data().row(0)) + bias.data().row(0);
  }
  Value<T> v = tape.make(std::move(out), {x, gain, bias});
  tape.set_backward(v, [v, x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), d] {
    const Mat<T>& g = v.grad();
    if (bias.requires_grad()) bias.grad().row(0) += g.colwise().sum();
    if (gain.requires_grad()) gain.grad().row(0) += g.cwiseProduct(xhat).colwise().sum();
    if (x.requires_grad()) {
      for (Index i = 0; i < g.rows(); ++i) {
        Eigen::Array<T, 1, Eigen::Dynamic> dxhat =
            g.row(i).cwiseProduct(gain.data().row(0)).array();
        const T m1 = dxhat.sum() / static_cast<T>(d);
        const T m2 = (dxhat * xhat.row(i).array()).sum() / static_cast<T>(d);
        x.grad().row(i).array() +=
            inv_sigma(i, 0) * (dxhat - m1 - xhat.row(i).array() * m2);
      }
    }
  });
  return v;
}

/// Inverted dropout with a caller-supplied stream. Identity (same node,
/// bitwise) in eval mode or at rate 0.
template <class T>
Value<T> dropout(Value<T> x, double rate, std::mt19937_64& stream, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Tape<T>& tape = *x.tape();
  const T scale = T(1.0 / (1.0 - rate));
  Mat<T> mask(x.rows(), x.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = unit(stream) >= rate ? scale : T(0);
    }
  }
  Mat<T> out = x.data().cwiseProduct(mask);
  Value<T> v = tape.make(std::move(out), {x});
  tape.set_backward(v, [v, x, mask = std::move(mask)] {
    if (x.requires_grad()) x.grad() += v.grad().cwiseProduct(mask);
  });
  return v;
}

template <class T>
Value<T> concat_features(Value<T> a, Value<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "concat_features");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_features: row counts disagree: " + shape_str(a.data()) +
                         " vs " + shape_str(b.data()));
  }
  const Index d1 = a.cols(), d2 = b.cols();
  Mat<T> out(a.rows(), d1 + d2);
  out.leftCols(d1) = a.data();
  out.rightCols(d2) = b.data();
  Value<T> v = tape.make(std::move(out), {a, b});
  tape.set_backward(v, [v, a, b, d1, d2] {
    if (a.requires_grad()) a.grad() += v.grad().leftCols(d1);
    if (b.requires_grad()) b.grad() += v.grad().rightCols(d2);
  });
  return v;
}

/// Mean negative log-softmax at the true class over masked rows.
template <class T>
Value<T> cross_entropy(Value<T> logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask) {
  Tape<T>& tape = *logits.tape();
  const Index m = logits.rows(), c = logits.cols();
  if (static_cast<Index>(labels.size()) != m || static_cast<Index>(mask.size()) != m) {
    throw DimensionError("cross_entropy: labels/mask length must equal logit rows " +
                         shape_str(logits.data()));
  }
  Index count = 0;
  for (Index i = 0; i < m; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    ++count;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                          std::to_string(c) + ") at row " + std::to_string(i));
    }
  }
  if (count == 0) throw ConfigError("cross_entropy: mask selects no rows");

  T total = T(0);
  for (Index i = 0; i < m; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const T mx = logits.data().row(i).maxCoeff();
    const T lse = std::log((logits.data().row(i).array() - mx).exp().sum()) + mx;
    total += lse - logits.data()(i, labels[static_cast<std::size_t>(i)]);
  }
  Mat<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(count);
  Value<T> v = tape.make(std::move(out), {logits});
  tape.set_backward(v, [v, logits, labels, mask, count] {
    if (!logits.requires_grad()) return;
    const T g = v.grad()(0, 0) / static_cast<T>(count);
    for (Index i = 0; i < logits.rows(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const T mx = logits.data().row(i).maxCoeff();
      Eigen::Array<T, 1, Eigen::Dynamic> p = (logits.data().row(i).array() - mx).exp();
      p /= p.sum();
      logits.grad().row(i).array() += g * p;
      logits.grad()(i, labels[static_cast<std::size_t>(i)]) -= g;
    }
  });
  return v;
}

namespace detail {

template <class T>
void check_same_shape(Value<T> a, Value<T> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a.data()) +
                         " vs " + shape_str(b.data()));
  }
}

}  // namespace detail

template <class T>
Value<T> add(Value<T> a, Value<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "add");
  detail::check_same_shape(a, b, "add");
  Value<T> v = tape.make(a.data() + b.data(), {a, b});
  tape.set_backward(v, [v, a, b] {
    if (a.requires_grad()) a.grad() += v.grad();
    if (b.requires_grad()) b.grad() += v.grad();
  });
  return v;
}

template <class T>
Value<T> sub(Value<T> a, Value<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "sub");
  detail::check_same_shape(a, b, "sub");
  Value<T> v = tape.make(a.data() - b.data(), {a, b});
  tape.set_backward(v, [v, a, b] {
    if (a.requires_grad()) a.grad() += v.grad();
    if (b.requires_grad()) b.grad() -= v.grad();
  });
  return v;
}

template <class T>
Value<T> mul(Value<T> a, Value<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "mul");
  detail::check_same_shape(a, b, "mul");
  Value<T> v = tape.make(a.data().cwiseProduct(b.data()), {a, b});
  tape.set_backward(v, [v, a, b] {
    if (a.requires_grad()) a.grad() += v.grad().cwiseProduct(b.data());
    if (b.requires_grad()) b.grad() += v.grad().cwiseProduct(a.data());
  });
  return v;
}

template <class T>
Value<T> one_minus(Value<T> x) {
  Tape<T>& tape = *x.tape();
  Value<T> v = tape.make((T(1) - x.data().array()).matrix(), {x});
  tape.set_backward(v, [v, x] {
    if (x.requires_grad()) x.grad() -= v.grad();
  });
  return v;
}

template <class T>
Value<T> relu(Value<T> x) {
  Tape<T>& tape = *x.tape();
  Value<T> v = tape.make(x.data().cwiseMax(T(0)), {x});
  // Subgradient 0 at exactly 0.
  tape.set_backward(v, [v, x] {
    if (!x.requires_grad()) return;
    x.grad().array() += v.grad().array() * (x.data().array() > T(0)).template cast<T>();
  });
  return v;
}

template <class T>
Value<T> sigmoid(Value<T> x) {
  Tape<T>& tape = *x.tape();
  Mat<T> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const T z = x.data()(i, j);
      out(i, j) = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                            : std::exp(z) / (T(1) + std::exp(z));
    }
  }
  Value<T> v = tape.make(std::move(out), {x});
  tape.set_backward(v, [v, x] {
    if (!x.requires_grad()) return;
    x.grad().array() += v.grad().array() * v.data().array() * (T(1) - v.data().array());
  });
  return v;
}

}  // namespace ognn
