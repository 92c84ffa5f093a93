#include "qus/fft.hpp"

#include <cmath>

#include "qus/common.hpp"

namespace qus {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

Fft::Fft(std::size_t n) : n_(n) {
  if (n == 0) throw InvalidArgument("fft: length must be positive");
  m_ = is_pow2(n) ? n : next_pow2(2 * n - 1);

  // Twiddles for the radix-2 kernel of size m_.
  tw_.resize(m_ / 2);
  for (std::size_t k = 0; k < m_ / 2; ++k) {
    const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(m_);
    tw_[k] = {std::cos(a), std::sin(a)};
  }

  if (!is_pow2(n)) {
    // chirp_k = exp(-i*pi*k^2/n); reduce k^2 mod 2n to keep the angle small.
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t k2 = (k * k) % (2 * n);
      const double a = -M_PI * static_cast<double>(k2) / static_cast<double>(n);
      chirp_[k] = {std::cos(a), std::sin(a)};
    }
    bfft_.assign(m_, {0.0, 0.0});
    bfft_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      bfft_[k] = std::conj(chirp_[k]);
      bfft_[m_ - k] = std::conj(chirp_[k]);
    }
    pow2_transform(bfft_.data(), false);
  }
  scratch_.resize(is_pow2(n) ? 0 : m_);
}

void Fft::pow2_transform(std::complex<double>* x, bool inv) const {
  const std::size_t n = m_;
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> w = tw_[k * stride];
        if (inv) w = std::conj(w);
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

void Fft::forward(std::complex<double>* x) const {
  if (m_ == n_) {
    pow2_transform(x, false);
    return;
  }
  // Bluestein: X_k = chirp_k * (a (*) b)_k with a_j = x_j*chirp_j and
  // b_j = conj(chirp_|j|) embedded circularly.
  auto& a = scratch_;
  for (std::size_t k = 0; k < n_; ++k) a[k] = x[k] * chirp_[k];
  for (std::size_t k = n_; k < m_; ++k) a[k] = {0.0, 0.0};
  pow2_transform(a.data(), false);
  for (std::size_t k = 0; k < m_; ++k) a[k] *= bfft_[k];
  pow2_transform(a.data(), true);
  const double scale = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) x[k] = a[k] * scale * chirp_[k];
}

void Fft::inverse(std::complex<double>* x) const {
  for (std::size_t k = 0; k < n_; ++k) x[k] = std::conj(x[k]);
  forward(x);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t k = 0; k < n_; ++k) x[k] = std::conj(x[k]) * scale;
}

std::vector<double> hilbert_envelope(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 8) throw InvalidArgument("hilbert_envelope: need at least 8 samples");
  Fft plan(n);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i], 0.0};
  plan.forward(buf.data());
  // Analytic signal: keep DC (and Nyquist for even n), double positive
  // frequencies, zero negative ones.
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) buf[k] *= 2.0;
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = {0.0, 0.0};
  plan.inverse(buf.data());
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) env[i] = std::abs(buf[i]);
  return env;
}

}  // namespace qus
