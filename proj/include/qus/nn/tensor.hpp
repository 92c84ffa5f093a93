#pragma once

#include <Eigen/Core>
#include <numeric>
#include <vector>

#include "qus/common.hpp"

namespace qus::nn {

/// Dense n-d array, row-major. Shapes used here: (B, F) for feature
/// matrices, (B, C, H, W) for image stacks, plus parameter shapes.
template <class T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// C(m,n) = alpha * op(A) * op(B) + beta * C, row-major buffers.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          T alpha, const T* a, const T* b, T beta, T* c) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  ConstMatMap<T> ma(a, trans_a ? ki : mi, trans_a ? mi : ki);
  ConstMatMap<T> mb(b, trans_b ? ni : ki, trans_b ? ki : ni);
  MatMap<T> mc(c, mi, ni);
  if (beta == T(0)) {
    if (!trans_a && !trans_b)
      mc.noalias() = alpha * (ma * mb);
    else if (trans_a && !trans_b)
      mc.noalias() = alpha * (ma.transpose() * mb);
    else if (!trans_a && trans_b)
      mc.noalias() = alpha * (ma * mb.transpose());
    else
      mc.noalias() = alpha * (ma.transpose() * mb.transpose());
  } else {
    mc *= beta;
    if (!trans_a && !trans_b)
      mc.noalias() += alpha * (ma * mb);
    else if (trans_a && !trans_b)
      mc.noalias() += alpha * (ma.transpose() * mb);
    else if (!trans_a && trans_b)
      mc.noalias() += alpha * (ma * mb.transpose());
    else
      mc.noalias() += alpha * (ma.transpose() * mb.transpose());
  }
}

/// Named view of one trainable tensor and its gradient.
template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <class T>
void check_finite(const Tensor<T>& t, const char* where) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericFailure(std::string("non-finite activation in ") + where);
}

}  // namespace qus::nn
