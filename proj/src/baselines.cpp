#include "qus/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qus::ml {

double rbf_kernel(const Feat4& a, const Feat4& b, double gamma) {
  double d2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

namespace {

void check_training_set(std::span<const Feat4> x, std::span<const int> y,
                        const char* who) {
  if (x.size() != y.size())
    throw InvalidArgument(std::string(who) + ": sample/label size mismatch");
  if (x.size() < 2) throw InvalidArgument(std::string(who) + ": need at least 2 samples");
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw InvalidArgument(std::string(who) + ": labels must be 0 or 1");
    (y[i] == 1 ? has1 : has0) = true;
    for (double v : x[i])
      if (!std::isfinite(v)) throw NumericFailure(std::string(who) + ": non-finite feature");
  }
  if (!has0 || !has1)
    throw TrainingFailure(std::string(who) + ": training set contains a single class");
}

// SMO working state.
struct Smo {
  std::span<const Feat4> x;
  std::vector<double> y;  // +/- 1
  std::vector<double> alpha;
  std::vector<double> err;  // f(x_i) - y_i
  double b = 0.0;
  double c, gamma, tol;
  Rng rng;
  std::int64_t steps = 0, max_steps = 0;

  double kernel(std::size_t i, std::size_t j) const {
    return rbf_kernel(x[i], x[j], gamma);
  }

  bool non_bound(std::size_t i) const {
    return alpha[i] > 1e-12 && alpha[i] < c - 1e-12;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double a1_old = alpha[i1], a2_old = alpha[i2];
    const double y1 = y[i1], y2 = y[i2];
    const double e1 = err[i1], e2 = err[i2];
    const double s = y1 * y2;
    double lo, hi;
    if (s < 0) {
      lo = std::max(0.0, a2_old - a1_old);
      hi = std::min(c, c + a2_old - a1_old);
    } else {
      lo = std::max(0.0, a1_old + a2_old - c);
      hi = std::min(c, a1_old + a2_old);
    }
    if (lo >= hi) return false;
    const double k11 = kernel(i1, i1), k12 = kernel(i1, i2), k22 = kernel(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    if (eta <= 0.0) return false;  // RBF: only for coincident points
    double a2 = a2_old + y2 * (e1 - e2) / eta;
    a2 = std::clamp(a2, lo, hi);
    if (std::abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12)) return false;
    const double a1 = a1_old + s * (a2_old - a2);

    // Threshold update (Platt's b1/b2 rules).
    const double b_old = b;
    const double b1 = b - e1 - y1 * (a1 - a1_old) * k11 - y2 * (a2 - a2_old) * k12;
    const double b2 = b - e2 - y1 * (a1 - a1_old) * k12 - y2 * (a2 - a2_old) * k22;
    if (a1 > 1e-12 && a1 < c - 1e-12)
      b = b1;
    else if (a2 > 1e-12 && a2 < c - 1e-12)
      b = b2;
    else
      b = 0.5 * (b1 + b2);

    alpha[i1] = a1;
    alpha[i2] = a2;
    const double d1 = y1 * (a1 - a1_old), d2 = y2 * (a2 - a2_old), db = b - b_old;
    for (std::size_t i = 0; i < x.size(); ++i)
      err[i] += d1 * kernel(i1, i) + d2 * kernel(i2, i) + db;
    ++steps;
    if (steps > max_steps) throw TrainingFailure("svm: SMO did not converge");
    return true;
  }

  bool examine(std::size_t i2) {
    const double y2 = y[i2], a2 = alpha[i2], e2 = err[i2];
    const double r2 = e2 * y2;
    if (!((r2 < -tol && a2 < c - 1e-12) || (r2 > tol && a2 > 1e-12))) return false;

    // Second-choice heuristic: maximize |E1 - E2| over non-bound points.
    std::size_t best = i2;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!non_bound(i)) continue;
      const double gap = std::abs(err[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best != i2 && take_step(best, i2)) return true;

    // Fall back: non-bound points from a random start, then everything.
    const std::size_t n = x.size();
    std::size_t start = rng.index(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = (start + k) % n;
      if (non_bound(i) && take_step(i, i2)) return true;
    }
    start = rng.index(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = (start + k) % n;
      if (take_step(i, i2)) return true;
    }
    return false;
  }
};

}  // namespace

SVMModel train_svm(std::span<const Feat4> x, std::span<const int> y,
                   const SVMConfig& cfg, std::uint64_t seed) {
  check_training_set(x, y, "train_svm");
  if (!(cfg.c > 0.0)) throw InvalidArgument("train_svm: C must be positive");
  if (!(cfg.gamma > 0.0)) throw InvalidArgument("train_svm: gamma must be positive");
  if (!(cfg.tol > 0.0)) throw InvalidArgument("train_svm: tol must be positive");

  Smo smo{x, {}, {}, {}, 0.0, cfg.c, cfg.gamma, cfg.tol, Rng(seed), 0, cfg.max_steps};
  const std::size_t n = x.size();
  smo.y.resize(n);
  smo.alpha.assign(n, 0.0);
  smo.err.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    smo.y[i] = y[i] == 1 ? 1.0 : -1.0;
    smo.err[i] = -smo.y[i];  // f = 0 initially
  }

  std::size_t changed = 1;
  bool examine_all = true;
  while (changed > 0 || examine_all) {
    changed = 0;
    if (examine_all) {
      for (std::size_t i = 0; i < n; ++i) changed += smo.examine(i) ? 1 : 0;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (smo.non_bound(i)) changed += smo.examine(i) ? 1 : 0;
    }
    if (examine_all)
      examine_all = false;
    else if (changed == 0)
      examine_all = true;
  }

  SVMModel m;
  m.gamma = cfg.gamma;
  m.c = cfg.c;
  m.bias = smo.b;
  for (std::size_t i = 0; i < n; ++i) {
    if (smo.alpha[i] > 1e-12) {
      m.support_vectors.push_back(x[i]);
      m.coef.push_back(smo.alpha[i] * smo.y[i]);
    }
  }
  if (m.support_vectors.empty())
    throw TrainingFailure("train_svm: no support vectors found");
  m.trained = true;
  return m;
}

double svm_decision(const SVMModel& m, const Feat4& f) {
  if (!m.trained) throw InvalidState("svm_decision: model is not trained");
  double s = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
    s += m.coef[i] * rbf_kernel(m.support_vectors[i], f, m.gamma);
  return s;
}

double svm_decision(const SVMModel& m, const stats::FeatureVector& f) {
  if (!f.normalized)
    throw InvalidArgument("svm_decision: feature vector must be normalized");
  return svm_decision(m, feat4_of(f));
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

namespace {

struct TreeBuilder {
  std::span<const Feat4> x;
  std::span<const int> y;
  const RFConfig& cfg;
  Rng& rng;
  std::vector<RFNode> nodes;

  static double gini(std::size_t pos, std::size_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
  }

  std::int32_t build(std::vector<std::size_t>& idx, int depth) {
    const std::size_t n = idx.size();
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += static_cast<std::size_t>(y[i]);
    const auto node_id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    nodes[node_id].p_fds = static_cast<double>(pos) / static_cast<double>(n);

    const bool pure = pos == 0 || pos == n;
    const bool depth_capped = cfg.max_depth > 0 && depth >= cfg.max_depth;
    if (pure || depth_capped || n < 2 * static_cast<std::size_t>(cfg.min_samples_leaf) ||
        n < 2)
      return node_id;

    // Feature subset: partial Fisher-Yates over {0,1,2,3}.
    std::array<int, 4> feats{0, 1, 2, 3};
    for (int i = 0; i < cfg.features_per_split; ++i) {
      const auto j = i + static_cast<int>(rng.index(4 - static_cast<std::size_t>(i)));
      std::swap(feats[i], feats[j]);
    }

    int best_feat = -1;
    double best_thr = 0.0, best_imp = gini(pos, n);
    std::vector<std::pair<double, std::size_t>> vals(n);
    for (int fi = 0; fi < cfg.features_per_split; ++fi) {
      const int f = feats[fi];
      for (std::size_t k = 0; k < n; ++k) vals[k] = {x[idx[k]][f], idx[k]};
      std::sort(vals.begin(), vals.end());
      std::size_t left_pos = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_pos += static_cast<std::size_t>(y[vals[k].second]);
        if (vals[k].first == vals[k + 1].first) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < static_cast<std::size_t>(cfg.min_samples_leaf) ||
            nr < static_cast<std::size_t>(cfg.min_samples_leaf))
          continue;
        const double imp = (static_cast<double>(nl) * gini(left_pos, nl) +
                            static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                           static_cast<double>(n);
        if (imp < best_imp - 1e-12) {
          best_imp = imp;
          best_feat = f;
          best_thr = 0.5 * (vals[k].first + vals[k + 1].first);
        }
      }
    }
    if (best_feat < 0) return node_id;  // no improving split on the tried features

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      if (x[i][static_cast<std::size_t>(best_feat)] <= best_thr)
        left.push_back(i);
      else
        right.push_back(i);
    }
    nodes[node_id].feature = best_feat;
    nodes[node_id].threshold = best_thr;
    const std::int32_t l = build(left, depth + 1);
    const std::int32_t r = build(right, depth + 1);
    nodes[node_id].left = l;
    nodes[node_id].right = r;
    return node_id;
  }
};

}  // namespace

RandomForestModel train_random_forest(std::span<const Feat4> x,
                                      std::span<const int> y, const RFConfig& cfg,
                                      std::uint64_t seed) {
  check_training_set(x, y, "train_random_forest");
  if (cfg.trees < 1) throw InvalidArgument("random_forest: need at least 1 tree");
  if (cfg.max_depth < 0) throw InvalidArgument("random_forest: max_depth must be >= 0");
  if (cfg.features_per_split < 1 || cfg.features_per_split > 4)
    throw InvalidArgument("random_forest: features_per_split must be in [1, 4]");
  if (cfg.min_samples_leaf < 1)
    throw InvalidArgument("random_forest: min_samples_leaf must be >= 1");

  RandomForestModel m;
  m.cfg = cfg;
  const Rng master(seed);
  const std::size_t n = x.size();
  for (int t = 0; t < cfg.trees; ++t) {
    Rng rng = master.fork(static_cast<std::uint64_t>(t));
    std::vector<std::size_t> idx(n);
    if (cfg.bootstrap) {
      for (auto& i : idx) i = rng.index(n);
    } else {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    TreeBuilder builder{x, y, cfg, rng, {}};
    builder.build(idx, 0);
    m.trees.push_back(std::move(builder.nodes));
  }
  m.trained = true;
  return m;
}

double rf_predict_proba(const RandomForestModel& m, const Feat4& f) {
  if (!m.trained || m.trees.empty())
    throw InvalidState("rf_predict_proba: model is not trained");
  double s = 0.0;
  for (const auto& tree : m.trees) {
    std::int32_t node = 0;
    while (!tree[static_cast<std::size_t>(node)].leaf()) {
      const auto& nd = tree[static_cast<std::size_t>(node)];
      node = f[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    s += tree[static_cast<std::size_t>(node)].p_fds;
  }
  return s / static_cast<double>(m.trees.size());
}

double rf_predict_proba(const RandomForestModel& m, const stats::FeatureVector& f) {
  if (!f.normalized)
    throw InvalidArgument("rf_predict_proba: feature vector must be normalized");
  return rf_predict_proba(m, feat4_of(f));
}

Feat4 feat4_of(const stats::FeatureVector& f) { return f.as_array(); }

// ---------------------------------------------------------------------------
// JSON round trips (used by the checkpoint format)
// ---------------------------------------------------------------------------

void to_json(json& j, const SVMModel& m) {
  j = json{};
  j["gamma"] = m.gamma;
  j["c"] = m.c;
  j["bias"] = m.bias;
  json svs = json::array();
  for (const auto& sv : m.support_vectors) svs.push_back(sv);
  j["support_vectors"] = svs;
  j["coef"] = m.coef;
}

void from_json(const json& j, SVMModel& m) {
  m.gamma = j.at("gamma").get<double>();
  m.c = j.at("c").get<double>();
  m.bias = j.at("bias").get<double>();
  m.support_vectors.clear();
  for (const auto& sv : j.at("support_vectors"))
    m.support_vectors.push_back(sv.get<Feat4>());
  m.coef = j.at("coef").get<std::vector<double>>();
  if (m.coef.size() != m.support_vectors.size())
    throw IoError("svm checkpoint: coef/support vector count mismatch");
  m.trained = true;
}

void to_json(json& j, const RandomForestModel& m) {
  j = json{};
  j["trees"] = json::array();
  for (const auto& tree : m.trees) {
    json t = json::array();
    for (const auto& nd : tree)
      t.push_back(json::array({nd.feature, nd.threshold, nd.p_fds, nd.left, nd.right}));
    j["trees"].push_back(t);
  }
  j["max_depth"] = m.cfg.max_depth;
  j["features_per_split"] = m.cfg.features_per_split;
}

void from_json(const json& j, RandomForestModel& m) {
  m.trees.clear();
  for (const auto& t : j.at("trees")) {
    std::vector<RFNode> tree;
    for (const auto& e : t) {
      RFNode nd;
      nd.feature = e.at(0).get<std::int32_t>();
      nd.threshold = e.at(1).get<double>();
      nd.p_fds = e.at(2).get<double>();
      nd.left = e.at(3).get<std::int32_t>();
      nd.right = e.at(4).get<std::int32_t>();
      tree.push_back(nd);
    }
    if (tree.empty()) throw IoError("rf checkpoint: empty tree");
    m.trees.push_back(std::move(tree));
  }
  if (m.trees.empty()) throw IoError("rf checkpoint: no trees");
  m.cfg.trees = static_cast<int>(m.trees.size());
  m.cfg.max_depth = j.value("max_depth", 0);
  m.cfg.features_per_split = j.value("features_per_split", 2);
  m.trained = true;
}

}  // namespace qus::ml
