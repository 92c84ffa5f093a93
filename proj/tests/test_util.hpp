#pragma once

// Shared helpers for the unit tests: deterministic sample generators and
// finite-difference gradient checking in double precision.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "qus/common.hpp"
#include "qus/nn/tensor.hpp"

namespace testutil {

/// Rayleigh quantiles at midpoint probabilities (i + 0.5) / n: a deterministic
/// sample whose moments converge to the distribution's at O(1/n), without any
/// RNG noise.
inline std::vector<double> rayleigh_grid(std::size_t n, double sigma = 1.0) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    a[i] = sigma * std::sqrt(-2.0 * std::log1p(-u));
  }
  return a;
}

/// Uniform(0,1) midpoint grid.
inline std::vector<double> uniform_grid(std::size_t n) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return a;
}

template <class T>
void fill_uniform(qus::nn::Tensor<T>& t, qus::Rng& rng, double lo = -1.0,
                  double hi = 1.0) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

/// Central finite difference of `loss` w.r.t. coordinate `idx` of `x`.
template <class T>
double fd_grad(qus::nn::Tensor<T>& x, std::size_t idx,
               const std::function<double()>& loss, double h = 1e-4) {
  const T saved = x.data[idx];
  x.data[idx] = static_cast<T>(static_cast<double>(saved) + h);
  const double up = loss();
  x.data[idx] = static_cast<T>(static_cast<double>(saved) - h);
  const double down = loss();
  x.data[idx] = saved;
  return (up - down) / (2.0 * h);
}

/// Relative error between an analytic and a numeric gradient entry.
inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

/// Deterministically choose up to `k` coordinate indices of a tensor.
inline std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t k,
                                            qus::Rng& rng) {
  std::vector<std::size_t> out;
  if (numel == 0) return out;
  if (numel <= k) {
    for (std::size_t i = 0; i < numel; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t i = 0; i < k; ++i) out.push_back(rng.index(numel));
  return out;
}

}  // namespace testutil
