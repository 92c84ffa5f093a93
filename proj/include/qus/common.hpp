#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qus {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. The C API (qus/qus.h) and the CLI map these onto the
// stable status/exit codes: usage = 1, data = 2, numeric = 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad call parameters or malformed configuration.
struct InvalidArgument : Error {
  using Error::Error;
};

/// Operation requested on an object in the wrong state (e.g. untrained model).
struct InvalidState : Error {
  using Error::Error;
};

/// A statistic is undefined for the given sample (constant patch, zero
/// variance, all-zero intensities).
struct DegenerateStatistic : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Non-finite values encountered during numeric computation.
struct NumericFailure : Error {
  using Error::Error;
};

/// Fine-tune/eval source overlap.
struct LeakageError : Error {
  using Error::Error;
};

struct TrainingFailure : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-stable across platforms; the
// distribution transforms are written out explicitly because the standard
// library distributions are implementation-defined.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Independent child stream derived from the base seed, not the current
  /// state, so fork(k) does not depend on how many draws happened before.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ (0xD1B54A32D192ED03ull * (stream + 1))));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// 2D grid, row-major.
// ---------------------------------------------------------------------------

template <class T>
struct Grid2D {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid2D() = default;
  Grid2D(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return data.size(); }
};

// ---------------------------------------------------------------------------
// Patch-level domain types shared by the simulator, the statistics code and
// the classifiers.
// ---------------------------------------------------------------------------

enum class Label : std::uint8_t { LDS = 0, FDS = 1, Unknown = 2 };

/// A fixed-size crop of non-negative envelope samples plus provenance.
struct EnvelopePatch {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major
  Label label = Label::Unknown;
  double depth_mm = 0.0;
  std::string source_id;

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  const double& at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return values.size(); }
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace qus
