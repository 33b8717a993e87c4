#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "naturalmos/tensor.hpp"

namespace naturalmos {

/// Bias-corrected Adam. First and second moment estimates are kept in double
/// per parameter, keyed by parameter name, so an optimizer instance can be
/// reused across epochs. Only parameters with requires_grad are updated;
/// a trainable parameter whose gradient was never populated is an error.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < 0.0) throw std::invalid_argument("adam: learning rate must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("adam: betas must lie in [0, 1)");
  }

  /// One update over every trainable parameter in the set.
  void step(ParameterSet<T>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, tensor] : params) {
      if (!tensor.requires_grad()) continue;
      auto node = tensor.node();
      if (node->grad.size() != node->values.size())
        throw std::invalid_argument("adam: parameter '" + name +
                                    "' has no gradient; run backward first");
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(node->values.size(), 0.0);
        st.v.assign(node->values.size(), 0.0);
      } else if (st.m.size() != node->values.size()) {
        throw std::invalid_argument("adam: parameter '" + name + "' changed size");
      }
      for (std::size_t i = 0; i < node->values.size(); ++i) {
        const double g = static_cast<double>(node->grad[i]);
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        node->values[i] =
            static_cast<T>(static_cast<double>(node->values[i]) -
                           lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  std::size_t step_count() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace naturalmos
