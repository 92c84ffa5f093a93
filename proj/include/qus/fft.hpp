#pragma once

#include <complex>
#include <span>
#include <vector>

namespace qus {

/// Complex FFT plan for a fixed length. Power-of-two lengths run the
/// iterative radix-2 kernel directly; any other length goes through
/// Bluestein's chirp-z identity on a padded power-of-two convolution.
/// Deterministic: no runtime tuning, results are bit-stable per platform.
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const { return n_; }

  void forward(std::complex<double>* x) const;
  /// Inverse transform, scaled by 1/n.
  void inverse(std::complex<double>* x) const;

 private:
  void pow2_transform(std::complex<double>* x, bool inv) const;

  std::size_t n_ = 0;
  std::size_t m_ = 0;  // power-of-two workhorse size (== n_ when n_ is 2^k)
  std::vector<std::complex<double>> tw_;     // radix-2 twiddles for size m_
  std::vector<std::complex<double>> chirp_;  // exp(-i*pi*k^2/n), Bluestein only
  std::vector<std::complex<double>> bfft_;   // spectrum of the chirp filter
  mutable std::vector<std::complex<double>> scratch_;
};

/// Magnitude of the analytic signal of a real sequence (FFT-based Hilbert
/// transform). Requires x.size() >= 8.
std::vector<double> hilbert_envelope(std::span<const double> x);

}  // namespace qus
