#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fairvit/tensor.hpp"

namespace fairvit {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected adaptive-moment step; `step` counts from 1.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grad, std::span<double> m, std::span<double> v,
                 long step, double lr, const AdamSettings& s = {}) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + s.eps));
  }
}

// Adam over a fixed list of leaf tensors, reading their accumulated grads.
template <typename T>
class ParamOptimizer {
 public:
  ParamOptimizer() = default;
  explicit ParamOptimizer(std::vector<Tensor<T>> params, AdamSettings settings = {})
      : params_(std::move(params)), settings_(settings) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++step_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      adam_update<T>(p.mutable_data(), p.grad(), m_[k], v_[k], step_, lr, settings_);
    }
  }

 private:
  std::vector<Tensor<T>> params_;
  AdamSettings settings_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

}  // namespace fairvit
