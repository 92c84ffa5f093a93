#pragma once

#include <cmath>

#include "qus/nn/tensor.hpp"

namespace qus::nn {

// All layers follow the same protocol: forward(x, train) caches whatever the
// matching backward(dy) needs; backward overwrites the parameter gradients
// (conv accumulates over the batch internally) and returns dx. One
// forward/backward pair per optimization step.

template <class T>
void init_xavier_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <class T>
void init_he_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Dense: y = x * W^T + b, x is (B, in), W is (out, in).
// ---------------------------------------------------------------------------

template <class T>
struct Dense {
  std::size_t in = 0, out = 0;
  Tensor<T> w, b, gw, gb;
  Tensor<T> x_cache;

  Dense(std::size_t in_, std::size_t out_)
      : in(in_), out(out_), w({out_, in_}), b({out_}), gw({out_, in_}), gb({out_}) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 2 || x.dim(1) != in)
      throw InvalidArgument("dense: input shape mismatch");
    const std::size_t bsz = x.dim(0);
    Tensor<T> y({bsz, out});
    gemm<T>(false, true, bsz, out, in, T(1), x.ptr(), w.ptr(), T(0), y.ptr());
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < out; ++j) y.data[i * out + j] += b.data[j];
    if (train) x_cache = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t bsz = dy.dim(0);
    if (x_cache.numel() != bsz * in) throw InvalidState("dense: backward before forward");
    gemm<T>(true, false, out, in, bsz, T(1), dy.ptr(), x_cache.ptr(), T(0), gw.ptr());
    gb.zero();
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < out; ++j) gb.data[j] += dy.data[i * out + j];
    Tensor<T> dx({bsz, in});
    gemm<T>(false, false, bsz, in, out, T(1), dy.ptr(), w.ptr(), T(0), dx.ptr());
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Conv2d: 3x3, stride 1, zero padding 1 ("same"). Weights (Cout, Cin, 3, 3).
// im2col + GEMM per image.
// ---------------------------------------------------------------------------

template <class T>
struct Conv2d {
  std::size_t cin = 0, cout = 0;
  Tensor<T> w, b, gw, gb;
  Tensor<T> x_cache;
  std::vector<T> col;  // (Cin*9, H*W) scratch

  Conv2d(std::size_t cin_, std::size_t cout_)
      : cin(cin_), cout(cout_), w({cout_, cin_, 3, 3}), b({cout_}),
        gw({cout_, cin_, 3, 3}), gb({cout_}) {}

  void im2col(const T* img, std::size_t h, std::size_t wd) {
    const std::size_t hw = h * wd;
    col.assign(cin * 9 * hw, T(0));
    for (std::size_t c = 0; c < cin; ++c) {
      const T* plane = img + c * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = col.data() + (c * 9 + ky * 3 + kx) * hw;
          const int dy = ky - 1, dx = kx - 1;
          for (std::size_t y = 0; y < h; ++y) {
            const auto sy = static_cast<long>(y) + dy;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            const std::size_t x0 = dx < 0 ? 1 : 0;
            const std::size_t x1 = dx > 0 ? wd - 1 : wd;
            const T* src = plane + static_cast<std::size_t>(sy) * wd;
            T* row = dst + y * wd;
            for (std::size_t x = x0; x < x1; ++x) row[x] = src[x + dx];
          }
        }
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 4 || x.dim(1) != cin)
      throw InvalidArgument("conv: input shape mismatch");
    const std::size_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3), hw = h * wd;
    Tensor<T> y({bsz, cout, h, wd});
    for (std::size_t i = 0; i < bsz; ++i) {
      im2col(x.ptr() + i * cin * hw, h, wd);
      T* yi = y.ptr() + i * cout * hw;
      gemm<T>(false, false, cout, hw, cin * 9, T(1), w.ptr(), col.data(), T(0), yi);
      for (std::size_t c = 0; c < cout; ++c) {
        const T bias = b.data[c];
        T* plane = yi + c * hw;
        for (std::size_t o = 0; o < hw; ++o) plane[o] += bias;
      }
    }
    if (train) x_cache = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (x_cache.shape.size() != 4) throw InvalidState("conv: backward before forward");
    const std::size_t bsz = x_cache.dim(0), h = x_cache.dim(2), wd = x_cache.dim(3);
    const std::size_t hw = h * wd;
    gw.zero();
    gb.zero();
    Tensor<T> dx(x_cache.shape);
    std::vector<T> dcol(cin * 9 * hw);
    for (std::size_t i = 0; i < bsz; ++i) {
      const T* dyi = dy.ptr() + i * cout * hw;
      im2col(x_cache.ptr() + i * cin * hw, h, wd);
      gemm<T>(false, true, cout, cin * 9, hw, T(1), dyi, col.data(), T(1), gw.ptr());
      for (std::size_t c = 0; c < cout; ++c) {
        double s = 0.0;
        const T* plane = dyi + c * hw;
        for (std::size_t o = 0; o < hw; ++o) s += static_cast<double>(plane[o]);
        gb.data[c] += static_cast<T>(s);
      }
      gemm<T>(true, false, cin * 9, hw, cout, T(1), w.ptr(), dyi, T(0), dcol.data());
      // col2im scatter-add
      T* dxi = dx.ptr() + i * cin * hw;
      for (std::size_t c = 0; c < cin; ++c) {
        T* plane = dxi + c * hw;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T* src = dcol.data() + (c * 9 + ky * 3 + kx) * hw;
            const int dyo = ky - 1, dxo = kx - 1;
            for (std::size_t y = 0; y < h; ++y) {
              const auto sy = static_cast<long>(y) + dyo;
              if (sy < 0 || sy >= static_cast<long>(h)) continue;
              const std::size_t x0 = dxo < 0 ? 1 : 0;
              const std::size_t x1 = dxo > 0 ? wd - 1 : wd;
              T* drow = plane + static_cast<std::size_t>(sy) * wd;
              const T* srow = src + y * wd;
              for (std::size_t x = x0; x < x1; ++x) drow[x + dxo] += srow[x];
            }
          }
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// BatchNorm over the channel axis: input (B, C) or (B, C, H, W). Biased
// batch variance; running stats updated as r = momentum*r + (1-m)*batch.
// ---------------------------------------------------------------------------

template <class T>
struct BatchNorm {
  std::size_t channels = 0;
  double momentum = 0.9, eps = 1e-5;
  Tensor<T> gamma, beta, ggamma, gbeta;
  Tensor<T> running_mean, running_var;
  // caches
  Tensor<T> xhat;
  std::vector<double> invstd;
  std::size_t n_per_channel = 0;

  explicit BatchNorm(std::size_t c)
      : channels(c), gamma({c}), beta({c}), ggamma({c}), gbeta({c}),
        running_mean({c}), running_var({c}) {
    for (auto& g : gamma.data) g = T(1);
    for (auto& v : running_var.data) v = T(1);
  }

  static void layout(const Tensor<T>& x, std::size_t c, std::size_t& bsz,
                     std::size_t& inner) {
    if (x.shape.size() == 2 && x.dim(1) == c) {
      bsz = x.dim(0);
      inner = 1;
    } else if (x.shape.size() == 4 && x.dim(1) == c) {
      bsz = x.dim(0);
      inner = x.dim(2) * x.dim(3);
    } else {
      throw InvalidArgument("batchnorm: input shape mismatch");
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    std::size_t bsz = 0, inner = 0;
    layout(x, channels, bsz, inner);
    const std::size_t n = bsz * inner;
    Tensor<T> y(x.shape);
    if (!train) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double mu = static_cast<double>(running_mean.data[c]);
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps);
        const double g = static_cast<double>(gamma.data[c]);
        const double bt = static_cast<double>(beta.data[c]);
        for (std::size_t i = 0; i < bsz; ++i) {
          const T* src = x.ptr() + (i * channels + c) * inner;
          T* dst = y.ptr() + (i * channels + c) * inner;
          for (std::size_t o = 0; o < inner; ++o)
            dst[o] = static_cast<T>(g * ((static_cast<double>(src[o]) - mu) * istd) + bt);
        }
      }
      return y;
    }
    if (n < 2) throw InvalidArgument("batchnorm: training batch needs at least 2 samples");
    xhat = Tensor<T>(x.shape);
    invstd.assign(channels, 0.0);
    n_per_channel = n;
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const T* src = x.ptr() + (i * channels + c) * inner;
        for (std::size_t o = 0; o < inner; ++o) s += static_cast<double>(src[o]);
      }
      const double mu = s / static_cast<double>(n);
      double s2 = 0.0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const T* src = x.ptr() + (i * channels + c) * inner;
        for (std::size_t o = 0; o < inner; ++o) {
          const double d = static_cast<double>(src[o]) - mu;
          s2 += d * d;
        }
      }
      const double var = s2 / static_cast<double>(n);
      const double istd = 1.0 / std::sqrt(var + eps);
      invstd[c] = istd;
      const double g = static_cast<double>(gamma.data[c]);
      const double bt = static_cast<double>(beta.data[c]);
      for (std::size_t i = 0; i < bsz; ++i) {
        const T* src = x.ptr() + (i * channels + c) * inner;
        T* xh = xhat.ptr() + (i * channels + c) * inner;
        T* dst = y.ptr() + (i * channels + c) * inner;
        for (std::size_t o = 0; o < inner; ++o) {
          const double v = (static_cast<double>(src[o]) - mu) * istd;
          xh[o] = static_cast<T>(v);
          dst[o] = static_cast<T>(g * v + bt);
        }
      }
      running_mean.data[c] =
          static_cast<T>(momentum * static_cast<double>(running_mean.data[c]) +
                         (1.0 - momentum) * mu);
      running_var.data[c] =
          static_cast<T>(momentum * static_cast<double>(running_var.data[c]) +
                         (1.0 - momentum) * var);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (xhat.numel() == 0 || !xhat.same_shape(dy))
      throw InvalidState("batchnorm: backward before training forward");
    std::size_t bsz = 0, inner = 0;
    layout(dy, channels, bsz, inner);
    const double n = static_cast<double>(n_per_channel);
    Tensor<T> dx(dy.shape);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const T* d = dy.ptr() + (i * channels + c) * inner;
        const T* xh = xhat.ptr() + (i * channels + c) * inner;
        for (std::size_t o = 0; o < inner; ++o) {
          sum_dy += static_cast<double>(d[o]);
          sum_dy_xhat += static_cast<double>(d[o]) * static_cast<double>(xh[o]);
        }
      }
      gbeta.data[c] = static_cast<T>(sum_dy);
      ggamma.data[c] = static_cast<T>(sum_dy_xhat);
      const double g = static_cast<double>(gamma.data[c]);
      const double istd = invstd[c];
      for (std::size_t i = 0; i < bsz; ++i) {
        const T* d = dy.ptr() + (i * channels + c) * inner;
        const T* xh = xhat.ptr() + (i * channels + c) * inner;
        T* out = dx.ptr() + (i * channels + c) * inner;
        for (std::size_t o = 0; o < inner; ++o) {
          const double v = static_cast<double>(d[o]) -
                           (sum_dy + static_cast<double>(xh[o]) * sum_dy_xhat) / n;
          out[o] = static_cast<T>(g * istd * v);
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

template <class T>
struct ReLU {
  Tensor<T> y_cache;
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    if (train) y_cache = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i)
      dx.data[i] = y_cache.data[i] > T(0) ? dy.data[i] : T(0);
    return dx;
  }
};

template <class T>
struct Tanh {
  Tensor<T> y_cache;
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i)
      y.data[i] = static_cast<T>(std::tanh(static_cast<double>(x.data[i])));
    if (train) y_cache = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      const T t = y_cache.data[i];
      dx.data[i] = dy.data[i] * (T(1) - t * t);
    }
    return dx;
  }
};

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    y.data[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
  return y;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling). rate == 0 is an exact identity and draws
// nothing from the RNG.
// ---------------------------------------------------------------------------

template <class T>
struct Dropout {
  double rate = 0.5;
  Tensor<T> mask;

  explicit Dropout(double r) : rate(r) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidArgument("dropout: rate must be in [0, 1)");
  }

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& rng) {
    if (!train || rate == 0.0) {
      mask = Tensor<T>();
      return x;
    }
    mask = Tensor<T>(x.shape);
    const double keep = 1.0 - rate;
    const T scale = static_cast<T>(1.0 / keep);
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const bool kept = rng.uniform() >= rate;
      mask.data[i] = kept ? scale : T(0);
      y.data[i] = x.data[i] * mask.data[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (mask.numel() == 0) return dy;  // identity pass
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[i] = dy.data[i] * mask.data[i];
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

template <class T>
struct AvgPool2x2 {
  std::vector<std::size_t> in_shape;
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 4) throw InvalidArgument("avgpool: need a 4-d input");
    const std::size_t bsz = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
    if (h % 2 != 0 || wd % 2 != 0)
      throw InvalidArgument("avgpool: spatial dimensions must be even");
    if (train) in_shape = x.shape;
    Tensor<T> y({bsz, ch, h / 2, wd / 2});
    for (std::size_t i = 0; i < bsz * ch; ++i) {
      const T* src = x.ptr() + i * h * wd;
      T* dst = y.ptr() + i * (h / 2) * (wd / 2);
      for (std::size_t r = 0; r < h / 2; ++r)
        for (std::size_t c = 0; c < wd / 2; ++c)
          dst[r * (wd / 2) + c] =
              static_cast<T>(0.25) * (src[(2 * r) * wd + 2 * c] + src[(2 * r) * wd + 2 * c + 1] +
                                      src[(2 * r + 1) * wd + 2 * c] +
                                      src[(2 * r + 1) * wd + 2 * c + 1]);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    if (in_shape.size() != 4) throw InvalidState("avgpool: backward before forward");
    const std::size_t bsz = in_shape[0], ch = in_shape[1], h = in_shape[2], wd = in_shape[3];
    Tensor<T> dx(in_shape);
    for (std::size_t i = 0; i < bsz * ch; ++i) {
      const T* src = dy.ptr() + i * (h / 2) * (wd / 2);
      T* dst = dx.ptr() + i * h * wd;
      for (std::size_t r = 0; r < h / 2; ++r)
        for (std::size_t c = 0; c < wd / 2; ++c) {
          const T v = static_cast<T>(0.25) * src[r * (wd / 2) + c];
          dst[(2 * r) * wd + 2 * c] = v;
          dst[(2 * r) * wd + 2 * c + 1] = v;
          dst[(2 * r + 1) * wd + 2 * c] = v;
          dst[(2 * r + 1) * wd + 2 * c + 1] = v;
        }
    }
    return dx;
  }
};

template <class T>
struct GlobalAvgPool {
  std::vector<std::size_t> in_shape;
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 4) throw InvalidArgument("gap: need a 4-d input");
    const std::size_t bsz = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (train) in_shape = x.shape;
    Tensor<T> y({bsz, ch});
    for (std::size_t i = 0; i < bsz * ch; ++i) {
      const T* src = x.ptr() + i * hw;
      double s = 0.0;
      for (std::size_t o = 0; o < hw; ++o) s += static_cast<double>(src[o]);
      y.data[i] = static_cast<T>(s / static_cast<double>(hw));
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    if (in_shape.size() != 4) throw InvalidState("gap: backward before forward");
    const std::size_t hw = in_shape[2] * in_shape[3];
    Tensor<T> dx(in_shape);
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      T* dst = dx.ptr() + i * hw;
      const T v = dy.data[i] * inv;
      for (std::size_t o = 0; o < hw; ++o) dst[o] = v;
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Binary cross-entropy on probabilities. The clamp only guards the logs; the
// training gradient is taken at the pre-sigmoid activation, (p - y) / B.
// ---------------------------------------------------------------------------

template <class T>
double bce_loss(const Tensor<T>& probs, std::span<const T> labels) {
  if (probs.numel() != labels.size())
    throw InvalidArgument("bce_loss: probability/label size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs.data[i]), 1e-7, 1.0 - 1e-7);
    const double y = static_cast<double>(labels[i]);
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return loss / static_cast<double>(labels.size());
}

template <class T>
Tensor<T> bce_sigmoid_grad(const Tensor<T>& probs, std::span<const T> labels) {
  Tensor<T> dz(probs.shape);
  const T inv_b = static_cast<T>(1.0 / static_cast<double>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    dz.data[i] = (probs.data[i] - labels[i]) * inv_b;
  return dz;
}

}  // namespace qus::nn
