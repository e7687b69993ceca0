#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ognn/common.hpp"
#include "ognn/model.hpp"

namespace ognn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay_theta = 0.0;  // coupled L2, added to gradients
  double weight_decay_xi = 0.0;
};

/// One (parameter, gradient) pairing handed to the optimizer.
template <class T>
struct GradSlot {
  std::string name;
  ParamGroup group;
  Mat<T>* value = nullptr;
  const Mat<T>* grad = nullptr;
};

/// Adam with bias correction and grouped coupled weight decay. The update
/// is a pure function of (params, grads, state): stepping twice from the
/// same snapshot yields the same result.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {
    if (cfg.lr <= 0) throw ConfigError("adam: lr must be positive");
  }

  void step(std::vector<GradSlot<T>>& slots) {
    if (slots_m_.empty()) {
      for (const auto& s : slots) {
        slots_m_.push_back(Mat<T>::Zero(s.value->rows(), s.value->cols()));
        slots_v_.push_back(Mat<T>::Zero(s.value->rows(), s.value->cols()));
      }
    }
    if (slots.size() != slots_m_.size()) {
      throw ContractError("adam: slot count changed between steps");
    }
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      GradSlot<T>& s = slots[i];
      if (!s.grad->allFinite()) {
        throw NumericError("adam: non-finite gradient for parameter '" + s.name + "'");
      }
      const double wd = s.group == ParamGroup::theta ? cfg_.weight_decay_theta
                                                     : cfg_.weight_decay_xi;
      Mat<T> g = *s.grad;
      if (wd != 0.0) g += static_cast<T>(wd) * (*s.value);
      Mat<T>& m = slots_m_[i];
      Mat<T>& v = slots_v_[i];
      m = static_cast<T>(cfg_.beta1) * m + (T(1) - static_cast<T>(cfg_.beta1)) * g;
      v = static_cast<T>(cfg_.beta2) * v.array().matrix() +
          (T(1) - static_cast<T>(cfg_.beta2)) * g.cwiseProduct(g);
      s.value->array() -= static_cast<T>(cfg_.lr) * (m.array() / bc1) /
                          ((v.array() / bc2).sqrt() + static_cast<T>(cfg_.eps));
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat<T>> slots_m_, slots_v_;
  long t_ = 0;
};

}  // namespace ognn
