#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/core/error.hpp"

namespace advdet::nn {

/// Adaptive moment estimation over a fixed parameter list.
template <class T>
class Adam {
 public:
  struct Moments {
    ad::Matrix<T> m, v;
  };

  explicit Adam(std::vector<ad::Parameter<T>*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      moments_.push_back({ad::Matrix<T>::Zero(p->value.rows(), p->value.cols()),
                          ad::Matrix<T>::Zero(p->value.rows(), p->value.cols())});
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T step_size = static_cast<T>(lr / c1);
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& mo = moments_[i];
      mo.m = b1 * mo.m + (T(1) - b1) * p.grad;
      mo.v = b2 * mo.v + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= step_size * mo.m.array() / (mo.v.array().sqrt() * inv_sqrt_c2 + eps);
    }
  }

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Moments>& moments() { return moments_; }
  const std::vector<ad::Parameter<T>*>& params() const { return params_; }

 private:
  std::vector<ad::Parameter<T>*> params_;
  std::vector<Moments> moments_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace advdet::nn
