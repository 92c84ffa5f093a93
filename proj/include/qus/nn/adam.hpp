#pragma once

#include "qus/nn/tensor.hpp"

namespace qus::nn {

/// Adam with bias correction. State slots are bound to a parameter list at
/// init time and must be used with the same list (same order) afterwards.
template <class T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  void init(const std::vector<ParamRef<T>>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value->shape);
      v.emplace_back(p.value->shape);
    }
  }

  void step(const std::vector<ParamRef<T>>& params, double lr) {
    if (params.size() != m.size()) throw InvalidState("adam: parameter list mismatch");
    if (!(lr > 0.0)) throw InvalidArgument("adam: learning rate must be positive");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Tensor<T>& g = *params[k].grad;
      Tensor<T>& val = *params[k].value;
      if (g.numel() != val.numel()) throw InvalidState("adam: gradient shape mismatch");
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const double gi = static_cast<double>(g.data[i]);
        if (!std::isfinite(gi))
          throw NumericFailure("adam: non-finite gradient in " + params[k].name);
        const double mi = beta1 * static_cast<double>(m[k].data[i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(v[k].data[i]) + (1.0 - beta2) * gi * gi;
        m[k].data[i] = static_cast<T>(mi);
        v[k].data[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        val.data[i] = static_cast<T>(static_cast<double>(val.data[i]) -
                                     lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

}  // namespace qus::nn
