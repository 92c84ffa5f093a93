#include "qus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qus::metrics {

namespace {

void check_set(const ScoredSet& s, bool need_both_classes) {
  if (s.scores.size() != s.labels.size())
    throw InvalidArgument("metrics: score/label size mismatch");
  if (s.scores.empty()) throw InvalidArgument("metrics: empty score set");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores[i])) throw NumericFailure("metrics: non-finite score");
    if (s.labels[i] != 0 && s.labels[i] != 1)
      throw InvalidArgument("metrics: labels must be 0 or 1");
    pos += static_cast<std::size_t>(s.labels[i]);
  }
  if (need_both_classes && (pos == 0 || pos == s.scores.size()))
    throw InvalidArgument("metrics: need both classes present");
}

std::vector<std::size_t> order_by_score(const ScoredSet& s, bool descending) {
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (descending)
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  else
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  return idx;
}

double auc_unchecked(const ScoredSet& s) {
  const auto idx = order_by_score(s, false);
  const std::size_t n = idx.size();
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    // midrank of the tie group [i, j), 1-based
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[idx[k]] == 1) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace

double auc(const ScoredSet& s) {
  check_set(s, true);
  return auc_unchecked(s);
}

std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  check_set(s, true);
  const auto idx = order_by_score(s, true);
  const double n_pos = static_cast<double>(
      std::count(s.labels.begin(), s.labels.end(), 1));
  const double n_neg = static_cast<double>(s.labels.size()) - n_pos;
  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  const std::size_t n = idx.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[idx[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    roc.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    i = j;
  }
  return roc;
}

YoudenResult youden(const ScoredSet& s) {
  check_set(s, true);
  const auto idx = order_by_score(s, true);
  const double n_pos = static_cast<double>(
      std::count(s.labels.begin(), s.labels.end(), 1));
  const double n_neg = static_cast<double>(s.labels.size()) - n_pos;

  YoudenResult best;
  best.j = 0.0;
  best.threshold = std::numeric_limits<double>::infinity();  // classify none positive
  best.sensitivity = 0.0;
  best.specificity = 1.0;

  std::size_t tp = 0, fp = 0, i = 0;
  const std::size_t n = idx.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[idx[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    const double sens = static_cast<double>(tp) / n_pos;
    const double spec = 1.0 - static_cast<double>(fp) / n_neg;
    const double jval = sens + spec - 1.0;
    if (jval > best.j) {
      best.j = jval;
      // Threshold below this score group: midpoint to the next distinct
      // score, or -inf when this group is the lowest.
      best.threshold = (j < n)
                           ? 0.5 * (s.scores[idx[i]] + s.scores[idx[j]])
                           : -std::numeric_limits<double>::infinity();
      best.sensitivity = sens;
      best.specificity = spec;
    }
    i = j;
  }
  return best;
}

namespace {

double percentile(std::vector<double>& sorted, double p) {
  // Linear interpolation between order statistics (type-7 quantile).
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

}  // namespace

std::pair<double, double> bootstrap_ci(const ScoredSet& s, int n_resamples,
                                       double level, std::uint64_t seed) {
  check_set(s, true);
  if (n_resamples < 1) throw InvalidArgument("bootstrap_ci: need at least 1 resample");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("bootstrap_ci: level must be in (0, 1)");
  const std::size_t n = s.scores.size();
  Rng master(seed);
  std::vector<double> aucs;
  aucs.reserve(static_cast<std::size_t>(n_resamples));
  ScoredSet r;
  r.scores.resize(n);
  r.labels.resize(n);
  for (int b = 0; b < n_resamples; ++b) {
    Rng rng = master.fork(static_cast<std::uint64_t>(b));
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.index(n);
        r.scores[i] = s.scores[k];
        r.labels[i] = s.labels[k];
        pos += static_cast<std::size_t>(r.labels[i]);
      }
      ok = pos > 0 && pos < n;
    }
    if (!ok)
      throw NumericFailure("bootstrap_ci: could not draw a two-class resample");
    aucs.push_back(auc_unchecked(r));
  }
  std::sort(aucs.begin(), aucs.end());
  const double alpha = 1.0 - level;
  return {percentile(aucs, alpha / 2.0), percentile(aucs, 1.0 - alpha / 2.0)};
}

EvalReport evaluate(const ScoredSet& s, int n_resamples, double level,
                    std::uint64_t seed) {
  EvalReport rep;
  rep.auc = auc(s);
  auto [lo, hi] = bootstrap_ci(s, n_resamples, level, seed);
  rep.ci_low = lo;
  rep.ci_high = hi;
  rep.youden = youden(s);
  rep.roc = roc_curve(s);
  rep.n_pos = static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), 1));
  rep.n_neg = s.labels.size() - rep.n_pos;
  return rep;
}

}  // namespace qus::metrics
