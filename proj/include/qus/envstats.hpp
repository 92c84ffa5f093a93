#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "qus/common.hpp"

namespace qus::stats {

struct FeatureConfig {
  double v = 0.5;        // envelope exponent for R and S
  int entropy_bins = 100;
};

/// The four patch-level summary statistics, optionally min-max normalized.
struct FeatureVector {
  double r = 0.0;        // SNR of A^v
  double s = 0.0;        // skewness of A^v
  double entropy = 0.0;  // Shannon entropy of the intensity histogram
  double t = 0.0;        // Nakagami log-likelihood ratio statistic
  bool normalized = false;

  std::array<double, 4> as_array() const { return {r, s, entropy, t}; }
};

struct NakagamiEstimate {
  double m = 0.0;  // shape (moment estimator on intensity)
  double t = 0.0;  // 2K * log-likelihood ratio vs. the exponential null
  std::size_t k = 0;
};

/// Per-feature affine map to [0, 1], fit on training features only.
struct FeatureNormalizer {
  std::array<double, 4> lo{};
  std::array<double, 4> hi{};
};

/// SNR of the v-th power of the envelope: mean / sqrt(biased variance).
double snr_r(std::span<const double> amplitude, double v);

/// Skewness of the v-th power of the envelope (third central moment over
/// biased variance^1.5).
double skewness_s(std::span<const double> amplitude, double v);

/// Shannon entropy (natural log) of an equal-width intensity histogram with
/// `bins` bins spanning [min, max] of the squared envelope.
double entropy(std::span<const double> amplitude, int bins);

/// Nakagami shape by moment matching on intensity, and the associated
/// likelihood-ratio statistic against the exponential (m = 1) null.
NakagamiEstimate nakagami(std::span<const double> amplitude);

FeatureVector featurize(const EnvelopePatch& patch, const FeatureConfig& cfg);

FeatureNormalizer fit_normalizer(std::span<const FeatureVector> train_features);

FeatureVector apply_normalizer(const FeatureNormalizer& n, const FeatureVector& f);

void write_features_csv(std::ostream& os, std::span<const FeatureVector> features,
                        std::span<const Label> labels);

}  // namespace qus::stats
