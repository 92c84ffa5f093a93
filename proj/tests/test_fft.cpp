#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qus/common.hpp"
#include "qus/fft.hpp"

using qus::Fft;
using cplx = std::complex<double>;

namespace {

// O(n^2) reference DFT, the independent oracle for the fast transform.
std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) /
                         static_cast<double>(n);
      acc += x[t] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<cplx> random_signal(std::size_t n, std::uint64_t seed) {
  qus::Rng rng(seed);
  std::vector<cplx> x(n);
  for (auto& v : x) v = cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  return x;
}

}  // namespace

TEST_SUITE("fft") {

TEST_CASE("matches the naive DFT for power-of-two and arbitrary sizes") {
  for (std::size_t n : {2u, 8u, 12u, 17u, 64u, 100u}) {
    auto x = random_signal(n, 1000 + n);
    auto expected = naive_dft(x);
    auto got = x;
    Fft plan(n);
    plan.forward(got.data());
    for (std::size_t k = 0; k < n; ++k) {
      CAPTURE(n);
      CAPTURE(k);
      CHECK(std::abs(got[k] - expected[k]) < 1e-10 * std::sqrt(double(n)));
    }
  }
}

TEST_CASE("inverse undoes forward") {
  for (std::size_t n : {8u, 10u, 16u, 33u}) {
    auto x = random_signal(n, 7 + n);
    auto y = x;
    Fft plan(n);
    plan.forward(y.data());
    plan.inverse(y.data());
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] - x[k]) < 1e-12);
  }
}

TEST_CASE("impulse transforms to a flat spectrum") {
  std::vector<cplx> x(16, 0.0);
  x[0] = 1.0;
  Fft plan(16);
  plan.forward(x.data());
  for (const auto& v : x) CHECK(std::abs(v - 1.0) < 1e-13);
}

TEST_CASE("bin-aligned cosine peaks at +/- k0 with amplitude n/2") {
  const std::size_t n = 64;
  const std::size_t k0 = 5;
  std::vector<cplx> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(k0 * t) / n);
  Fft plan(n);
  plan.forward(x.data());
  for (std::size_t k = 0; k < n; ++k) {
    const double expected = (k == k0 || k == n - k0) ? n / 2.0 : 0.0;
    CHECK(std::abs(std::abs(x[k]) - expected) < 1e-10);
  }
}

TEST_CASE("parseval energy identity") {
  const std::size_t n = 24;
  auto x = random_signal(n, 99);
  double time_energy = 0.0;
  for (const auto& v : x) time_energy += std::norm(v);
  Fft plan(n);
  plan.forward(x.data());
  double freq_energy = 0.0;
  for (const auto& v : x) freq_energy += std::norm(v);
  CHECK(time_energy == doctest::Approx(freq_energy / n).epsilon(1e-12));
}

TEST_CASE("hilbert envelope of a bin-aligned cosine is exactly one") {
  const std::size_t n = 256;
  const std::size_t k0 = 32;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(k0 * t) / n);
  const auto env = qus::hilbert_envelope(x);
  REQUIRE(env.size() == n);
  for (double v : env) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("hilbert envelope scales linearly and sees modulation") {
  const std::size_t n = 512;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double amp = 2.0 + std::sin(2.0 * std::numbers::pi * t / double(n));
    x[t] = amp * std::cos(2.0 * std::numbers::pi * 64.0 * t / double(n));
  }
  const auto env = qus::hilbert_envelope(x);
  for (std::size_t t = 0; t < n; ++t) {
    const double amp = 2.0 + std::sin(2.0 * std::numbers::pi * t / double(n));
    CHECK(env[t] == doctest::Approx(amp).epsilon(0.02));
  }
}

TEST_CASE("hilbert envelope rejects tiny inputs") {
  std::vector<double> x(4, 1.0);
  CHECK_THROWS_AS((void)qus::hilbert_envelope(x), qus::InvalidArgument);
}

}  // TEST_SUITE
