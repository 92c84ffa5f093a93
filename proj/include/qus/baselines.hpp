#pragma once

#include <array>
#include <span>

#include <nlohmann/json.hpp>

#include "qus/common.hpp"
#include "qus/envstats.hpp"

namespace qus::ml {

using Feat4 = std::array<double, 4>;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// RBF-kernel SVM trained with SMO (two-multiplier updates, |E1 - E2|
// second-choice heuristic, error cache).
// ---------------------------------------------------------------------------

struct SVMConfig {
  double c = 1.0;
  double gamma = 1.0;
  double tol = 1e-3;
  std::int64_t max_steps = 2'000'000;  // successful multiplier updates
};

struct SVMModel {
  std::vector<Feat4> support_vectors;
  std::vector<double> coef;  // alpha_i * y_i
  double bias = 0.0;
  double gamma = 0.0;
  double c = 0.0;
  bool trained = false;
};

double rbf_kernel(const Feat4& a, const Feat4& b, double gamma);

/// Labels are 0/1 (mapped internally to -1/+1 with 1 = FDS = positive).
SVMModel train_svm(std::span<const Feat4> x, std::span<const int> y,
                   const SVMConfig& cfg, std::uint64_t seed);

/// Signed decision value sum(coef_i k(sv_i, f)) + bias.
double svm_decision(const SVMModel& m, const Feat4& f);

/// FeatureVector overload; requires the normalized flag.
double svm_decision(const SVMModel& m, const stats::FeatureVector& f);

// ---------------------------------------------------------------------------
// Random forest with Gini splits on the four summary statistics.
// ---------------------------------------------------------------------------

struct RFConfig {
  int trees = 300;
  int max_depth = 8;            // 0 = unlimited
  int features_per_split = 2;   // floor(sqrt(4))
  int min_samples_leaf = 1;
  bool bootstrap = true;
};

struct RFNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double p_fds = 0.0;         // leaf class frequency
  std::int32_t left = -1;
  std::int32_t right = -1;
  bool leaf() const { return feature < 0; }
};

struct RandomForestModel {
  std::vector<std::vector<RFNode>> trees;  // preorder node lists
  RFConfig cfg;
  bool trained = false;
};

RandomForestModel train_random_forest(std::span<const Feat4> x,
                                      std::span<const int> y, const RFConfig& cfg,
                                      std::uint64_t seed);

/// Mean leaf FDS frequency over all trees, in [0, 1].
double rf_predict_proba(const RandomForestModel& m, const Feat4& f);

double rf_predict_proba(const RandomForestModel& m, const stats::FeatureVector& f);

Feat4 feat4_of(const stats::FeatureVector& f);

void to_json(json& j, const SVMModel& m);
void from_json(const json& j, SVMModel& m);
void to_json(json& j, const RandomForestModel& m);
void from_json(const json& j, RandomForestModel& m);

}  // namespace qus::ml
