#pragma once

#include <cmath>
#include <map>
#include <span>

#include "star/autograd.hpp"

namespace star {

/// Adam with optional global-norm gradient clipping. Moment state is kept
/// per parameter, so parameters left out of a step keep their moments.
template <typename T>
class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates `params` from their gradients, then zeroes those gradients.
  /// Returns the pre-clipping global gradient norm.
  double step(std::span<ad::Parameter<T>* const> params, double clip_norm = 0) {
    double sq = 0;
    for (auto* p : params)
      sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    const double scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;

    for (auto* p : params) {
      State& s = state_[p];
      if (s.m.size() == 0) {
        s.m = ad::Matrix<T>::Zero(p->value.rows(), p->value.cols());
        s.v = ad::Matrix<T>::Zero(p->value.rows(), p->value.cols());
      }
      ++s.t;
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      const auto g = (p->grad.array() * static_cast<T>(scale));
      s.m.array() = b1 * s.m.array() + (T(1) - b1) * g;
      s.v.array() = b2 * s.v.array() + (T(1) - b2) * g * g;
      const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(s.t)));
      const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(s.t)));
      p->value.array() -= static_cast<T>(lr_) * (s.m.array() / c1) /
                          ((s.v.array() / c2).sqrt() + static_cast<T>(eps_));
      p->grad.setZero();
    }
    return norm;
  }

  double learning_rate() const { return lr_; }

private:
  struct State {
    ad::Matrix<T> m, v;
    long t = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::map<const ad::Parameter<T>*, State> state_;
};

}  // namespace star
