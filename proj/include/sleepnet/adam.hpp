#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sleepnet/model.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected moment update for one tensor.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t t, const AdamConfig& cfg) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size()) {
    throw ShapeError("adam_update: parameter/gradient/moment sizes disagree (" +
                     std::to_string(param.size()) + ", " + std::to_string(grad.size()) + ", " +
                     std::to_string(m.size()) + ", " + std::to_string(v.size()) + ")");
  }
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T m_corr = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(t))));
  const T v_corr = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(t))));
  const T lr = static_cast<T>(cfg.lr);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    const T m_hat = m[i] * m_corr;
    const T v_hat = v[i] * v_corr;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// Moment state for an ordered parameter list. The order is fixed at the
// first step; later steps must present the same tensors.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }

  void step(std::span<ParamView<T>> params, std::span<const std::span<const T>> grads) {
    if (params.size() != grads.size()) {
      throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                       std::to_string(grads.size()) + " gradients");
    }
    if (moments_.empty()) {
      moments_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        moments_[i].m.assign(params[i].tensor->numel(), T{});
        moments_[i].v.assign(params[i].tensor->numel(), T{});
      }
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_update<T>(params[i].tensor->values(), grads[i], moments_[i].m, moments_[i].v, t_, cfg_);
    }
  }

 private:
  struct Moments {
    std::vector<T> m, v;
  };

  AdamConfig cfg_;
  std::vector<Moments> moments_;
  std::uint64_t t_ = 0;
};

}  // namespace sleepnet
