#include "qus/envstats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

namespace qus::stats {

namespace {

void check_amplitudes(std::span<const double> a, const char* who) {
  if (a.size() < 2)
    throw InvalidArgument(std::string(who) + ": need at least 2 samples");
  for (double x : a) {
    if (!std::isfinite(x)) throw NumericFailure(std::string(who) + ": non-finite sample");
    if (x < 0.0) throw InvalidArgument(std::string(who) + ": negative envelope sample");
  }
}

struct Moments {
  double mean, var, m3;  // var and m3 are the biased central moments
};

Moments central_moments(std::span<const double> x, double v) {
  // Two-pass for stability; reductions in double.
  const std::size_t n = x.size();
  double s = 0.0;
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = (v == 1.0) ? x[i] : std::pow(x[i], v);
    s += p[i];
  }
  const double mean = s / static_cast<double>(n);
  double s2 = 0.0, s3 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - mean;
    s2 += d * d;
    s3 += d * d * d;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {mean, s2 * inv, s3 * inv};
}

}  // namespace

double snr_r(std::span<const double> a, double v) {
  check_amplitudes(a, "snr_r");
  if (v <= 0.0) throw InvalidArgument("snr_r: exponent must be positive");
  const Moments m = central_moments(a, v);
  if (m.var <= 0.0) throw DegenerateStatistic("snr_r: zero variance patch");
  return m.mean / std::sqrt(m.var);
}

double skewness_s(std::span<const double> a, double v) {
  check_amplitudes(a, "skewness_s");
  if (v <= 0.0) throw InvalidArgument("skewness_s: exponent must be positive");
  const Moments m = central_moments(a, v);
  if (m.var <= 0.0) throw DegenerateStatistic("skewness_s: zero variance patch");
  return m.m3 / (m.var * std::sqrt(m.var));
}

double entropy(std::span<const double> a, int bins) {
  check_amplitudes(a, "entropy");
  if (bins < 2) throw InvalidArgument("entropy: need at least 2 bins");
  double lo = a[0] * a[0], hi = lo;
  std::vector<double> intensity(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    intensity[i] = a[i] * a[i];
    lo = std::min(lo, intensity[i]);
    hi = std::max(hi, intensity[i]);
  }
  if (!(hi > lo)) throw DegenerateStatistic("entropy: constant intensity patch");
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (double x : intensity) {
    auto b = static_cast<std::size_t>((x - lo) * scale);
    if (b >= count.size()) b = count.size() - 1;  // x == hi lands here
    ++count[b];
  }
  const double n = static_cast<double>(a.size());
  double h = 0.0;
  for (std::size_t c : count) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

NakagamiEstimate nakagami(std::span<const double> a) {
  check_amplitudes(a, "nakagami");
  const std::size_t k = a.size();
  std::vector<double> intensity(k);
  double s1 = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    intensity[i] = a[i] * a[i];
    s1 += intensity[i];
  }
  const double mean_i = s1 / static_cast<double>(k);
  if (mean_i <= 0.0) throw DegenerateStatistic("nakagami: all-zero intensity patch");
  double s2 = 0.0;
  for (double x : intensity) {
    const double d = x - mean_i;
    s2 += d * d;
  }
  const double var_i = s2 / static_cast<double>(k);
  if (var_i <= 0.0) throw DegenerateStatistic("nakagami: zero intensity variance");
  const double m = mean_i * mean_i / var_i;

  // Mean log-intensity; zeros are floored relative to the mean so the
  // statistic stays finite on sparse patches.
  const double floor = 1e-12 * mean_i;
  double slog = 0.0;
  for (double x : intensity) slog += std::log(std::max(x, floor));
  const double mean_log = slog / static_cast<double>(k);

  const double t = 2.0 * static_cast<double>(k) *
                   (m * std::log(m) - std::lgamma(m) +
                    (m - 1.0) * (mean_log - std::log(mean_i) - 1.0));
  if (!std::isfinite(t)) throw NumericFailure("nakagami: non-finite statistic");
  return {m, t, k};
}

FeatureVector featurize(const EnvelopePatch& patch, const FeatureConfig& cfg) {
  if (patch.rows <= 0 || patch.cols <= 0 ||
      patch.values.size() != static_cast<std::size_t>(patch.rows) * patch.cols)
    throw InvalidArgument("featurize: inconsistent patch dimensions");
  std::span<const double> a(patch.values);
  FeatureVector f;
  f.r = snr_r(a, cfg.v);
  f.s = skewness_s(a, cfg.v);
  f.entropy = entropy(a, cfg.entropy_bins);
  f.t = nakagami(a).t;
  f.normalized = false;
  return f;
}

FeatureNormalizer fit_normalizer(std::span<const FeatureVector> train) {
  if (train.size() < 2)
    throw InvalidArgument("fit_normalizer: need at least 2 feature vectors");
  FeatureNormalizer n;
  auto first = train[0].as_array();
  n.lo = first;
  n.hi = first;
  for (const auto& f : train) {
    const auto v = f.as_array();
    for (int i = 0; i < 4; ++i) {
      n.lo[i] = std::min(n.lo[i], v[i]);
      n.hi[i] = std::max(n.hi[i], v[i]);
    }
  }
  for (int i = 0; i < 4; ++i)
    if (!(n.hi[i] > n.lo[i]))
      throw DegenerateStatistic("fit_normalizer: constant feature column");
  return n;
}

FeatureVector apply_normalizer(const FeatureNormalizer& n, const FeatureVector& f) {
  const auto v = f.as_array();
  FeatureVector out;
  std::array<double, 4> mapped{};
  for (int i = 0; i < 4; ++i) mapped[i] = (v[i] - n.lo[i]) / (n.hi[i] - n.lo[i]);
  out.r = mapped[0];
  out.s = mapped[1];
  out.entropy = mapped[2];
  out.t = mapped[3];
  out.normalized = true;
  return out;
}

namespace {

void append_double(std::string& line, double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  line.append(buf, p);
}

}  // namespace

void write_features_csv(std::ostream& os, std::span<const FeatureVector> features,
                        std::span<const Label> labels) {
  if (features.size() != labels.size())
    throw InvalidArgument("write_features_csv: feature/label size mismatch");
  os << "r,s,entropy,t,label\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::string line;
    const auto v = features[i].as_array();
    for (int j = 0; j < 4; ++j) {
      append_double(line, v[j]);
      line.push_back(',');
    }
    line += std::to_string(static_cast<int>(labels[i]));
    line.push_back('\n');
    os << line;
  }
}

}  // namespace qus::stats
