#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wmlab/rng.hpp"
#include "wmlab/tensor.hpp"

namespace wmlab::tensor {

// Adam with bias correction. eps sits outside the square root:
//   p -= lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>*> params, T lr = T(1e-3),
                T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      if (params_[i] == nullptr) throw std::invalid_argument("adam: null param");
      m_[i].assign(params_[i]->numel(), T(0));
      v_[i].assign(params_[i]->numel(), T(0));
    }
  }

  // Applies one update from the accumulated grads, then clears them.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(b1_), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(b2_), t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = *params_[i];
      if (p.grad.size() != p.data.size()) {
        throw std::invalid_argument("adam: parameter " + std::to_string(i) +
                                    " has no gradient");
      }
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (size_t q = 0; q < p.data.size(); ++q) {
        const T g = p.grad[q];
        m[q] = b1_ * m[q] + (T(1) - b1_) * g;
        v[q] = b2_ * v[q] + (T(1) - b2_) * g * g;
        const double mh = static_cast<double>(m[q]) / bc1;
        const double vh = static_cast<double>(v[q]) / bc2;
        p.data[q] -= static_cast<T>(static_cast<double>(lr_) * mh /
                                    (std::sqrt(vh) + static_cast<double>(eps_)));
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (Tensor<T>* p : params_) p->zero_grad();
  }

  int64_t steps() const { return t_; }
  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Kaiming-uniform fill: U(-bound, bound) with bound = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(Tensor<T>& w, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw std::invalid_argument("kaiming_uniform: bad fan_in");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : w.data) {
    v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

}  // namespace wmlab::tensor
