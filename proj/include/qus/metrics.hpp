#pragma once

#include <span>
#include <utility>
#include <vector>

#include "qus/common.hpp"

namespace qus::metrics {

/// Scores with binary ground truth (1 = positive class).
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct YoudenResult {
  double j = 0.0;
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct EvalReport {
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  YoudenResult youden;
  std::vector<RocPoint> roc;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Area under the ROC curve by the rank-sum (Mann-Whitney) formulation with
/// midranks, so ties contribute half credit exactly.
double auc(const ScoredSet& s);

/// Stepwise ROC curve from (0,0) to (1,1); one vertex after each distinct
/// score value, classifying as positive when score > threshold.
std::vector<RocPoint> roc_curve(const ScoredSet& s);

/// Maximum of sensitivity + specificity - 1 over thresholds placed at
/// midpoints between adjacent distinct scores (plus the two infinities).
YoudenResult youden(const ScoredSet& s);

/// Percentile bootstrap CI for the AUC. Resamples with replacement;
/// single-class resamples are redrawn.
std::pair<double, double> bootstrap_ci(const ScoredSet& s, int n_resamples,
                                       double level, std::uint64_t seed);

EvalReport evaluate(const ScoredSet& s, int n_resamples, double level,
                    std::uint64_t seed);

}  // namespace qus::metrics
