#include "qus/training.hpp"

#include <algorithm>
#include <cmath>

namespace qus::train {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentConfig::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw InvalidArgument("augment: flip_prob must be in [0, 1]");
  if (elastic_grid_px < 2) throw InvalidArgument("augment: elastic_grid_px must be >= 2");
  if (elastic_sigma_px < 0.0)
    throw InvalidArgument("augment: elastic_sigma_px must be >= 0");
  if (noise_sigma < 0.0) throw InvalidArgument("augment: noise_sigma must be >= 0");
}

EnvelopePatch flip_lateral(const EnvelopePatch& patch) {
  EnvelopePatch out = patch;
  for (int r = 0; r < patch.rows; ++r)
    for (int c = 0; c < patch.cols; ++c) out.at(r, c) = patch.at(r, patch.cols - 1 - c);
  return out;
}

namespace {

// Coarse-grid elastic warp: i.i.d. normal displacements on control points
// every `grid_px` pixels, bilinearly upsampled to a dense field; source
// sampling is bilinear with edge clamping.
EnvelopePatch elastic_warp(const EnvelopePatch& patch, int grid_px, double sigma_px,
                           Rng& rng) {
  const int rows = patch.rows, cols = patch.cols;
  const int gr = (rows - 1) / grid_px + 2;  // control nodes per axis
  const int gc = (cols - 1) / grid_px + 2;
  std::vector<double> dr(static_cast<std::size_t>(gr) * gc);
  std::vector<double> dc(static_cast<std::size_t>(gr) * gc);
  for (int i = 0; i < gr * gc; ++i) {
    dr[static_cast<std::size_t>(i)] = sigma_px * rng.normal();
    dc[static_cast<std::size_t>(i)] = sigma_px * rng.normal();
  }
  auto node = [&](const std::vector<double>& d, int r, int c) {
    r = std::clamp(r, 0, gr - 1);
    c = std::clamp(c, 0, gc - 1);
    return d[static_cast<std::size_t>(r) * gc + c];
  };
  auto field = [&](const std::vector<double>& d, double r, double c) {
    const double fr = r / grid_px, fc = c / grid_px;
    const int r0 = static_cast<int>(std::floor(fr)), c0 = static_cast<int>(std::floor(fc));
    const double wr = fr - r0, wc = fc - c0;
    return (1 - wr) * ((1 - wc) * node(d, r0, c0) + wc * node(d, r0, c0 + 1)) +
           wr * ((1 - wc) * node(d, r0 + 1, c0) + wc * node(d, r0 + 1, c0 + 1));
  };
  EnvelopePatch out = patch;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double sr = std::clamp(r + field(dr, r, c), 0.0, rows - 1.0);
      const double sc = std::clamp(c + field(dc, r, c), 0.0, cols - 1.0);
      const int r0 = std::min(static_cast<int>(sr), rows - 2);
      const int c0 = std::min(static_cast<int>(sc), cols - 2);
      const double wr = sr - r0, wc = sc - c0;
      out.at(r, c) = (1 - wr) * ((1 - wc) * patch.at(r0, c0) + wc * patch.at(r0, c0 + 1)) +
                     wr * ((1 - wc) * patch.at(r0 + 1, c0) + wc * patch.at(r0 + 1, c0 + 1));
    }
  }
  return out;
}

}  // namespace

EnvelopePatch augment(const EnvelopePatch& patch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (patch.rows < 2 || patch.cols < 2 ||
      patch.values.size() != static_cast<std::size_t>(patch.rows) * patch.cols)
    throw InvalidArgument("augment: bad patch shape");
  EnvelopePatch out = patch;
  if (cfg.flip_prob > 0.0 && rng.uniform() < cfg.flip_prob) out = flip_lateral(out);
  if (cfg.elastic_sigma_px > 0.0)
    out = elastic_warp(out, cfg.elastic_grid_px, cfg.elastic_sigma_px, rng);
  if (cfg.noise_sigma > 0.0) {
    double mean = 0.0;
    for (double v : out.values) mean += v;
    mean /= static_cast<double>(out.values.size());
    double var = 0.0;
    for (double v : out.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.values.size());
    const double sigma = cfg.noise_sigma * std::sqrt(var);
    if (sigma > 0.0)
      for (double& v : out.values) v = std::max(0.0, v + sigma * rng.normal());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schedule / cyclic LR / epoch loop
// ---------------------------------------------------------------------------

void Schedule::validate() const {
  if (max_epochs < 0) throw InvalidArgument("schedule: max_epochs must be >= 0");
  if (batch_size < 2) throw InvalidArgument("schedule: batch_size must be >= 2");
  if (!(lr_min > 0.0) || !(lr_max > 0.0))
    throw InvalidArgument("schedule: learning rates must be positive");
  if (lr_min > lr_max) throw InvalidArgument("schedule: lr_min must be <= lr_max");
  if (cycle_epochs < 1) throw InvalidArgument("schedule: cycle_epochs must be >= 1");
  if (patience < 1) throw InvalidArgument("schedule: patience must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw InvalidArgument("schedule: dropout must be in [0, 1)");
  if (!(finetune_lr_scale > 0.0 && finetune_lr_scale <= 1.0))
    throw InvalidArgument("schedule: finetune_lr_scale must be in (0, 1]");
}

Schedule Schedule::finetune_variant() const {
  Schedule s = *this;
  s.lr_min *= finetune_lr_scale;
  s.lr_max *= finetune_lr_scale;
  return s;
}

double cyclic_lr(std::int64_t step, std::int64_t cycle_steps, double lr_min,
                 double lr_max) {
  if (step < 0 || cycle_steps < 2)
    throw InvalidArgument("cyclic_lr: need step >= 0 and cycle_steps >= 2");
  if (!(lr_min > 0.0 && lr_max >= lr_min))
    throw InvalidArgument("cyclic_lr: need 0 < lr_min <= lr_max");
  const double phase = static_cast<double>(step % cycle_steps) /
                       static_cast<double>(cycle_steps);
  const double x = std::abs(2.0 * phase - 1.0);
  return lr_min + (lr_max - lr_min) * (1.0 - x);
}

TrainHistory train_loop(std::size_t n_train, const Schedule& sched, Rng& rng,
                        const LoopCallbacks& cb) {
  sched.validate();
  if (n_train < 2) throw InvalidArgument("train_loop: need at least 2 training samples");
  if (!cb.step || !cb.val_auc) throw InvalidArgument("train_loop: missing callbacks");

  TrainHistory hist;
  if (sched.max_epochs == 0) return hist;

  const auto bsz = static_cast<std::size_t>(sched.batch_size);
  std::size_t steps_per_epoch = n_train / bsz;
  if (n_train % bsz >= 2) ++steps_per_epoch;
  if (steps_per_epoch == 0)
    throw InvalidArgument("train_loop: batch size larger than the training set");
  const std::int64_t cycle_steps =
      std::max<std::int64_t>(2, static_cast<std::int64_t>(steps_per_epoch) *
                                    sched.cycle_epochs);

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  EarlyStopper stopper{sched.patience};
  bool have_snapshot = false;
  std::int64_t global_step = 0;

  for (int epoch = 1; epoch <= sched.max_epochs; ++epoch) {
    // Fisher-Yates shuffle.
    for (std::size_t i = n_train - 1; i > 0; --i) {
      const std::size_t j = rng.index(i + 1);
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double lr_first = 0.0;
    for (std::size_t start = 0; start < n_train && batches < steps_per_epoch;
         start += bsz) {
      const std::size_t m = std::min(bsz, n_train - start);
      if (m < 2) break;
      const double lr = cyclic_lr(global_step, cycle_steps, sched.lr_min, sched.lr_max);
      if (batches == 0) lr_first = lr;
      loss_sum += cb.step(std::span<const std::size_t>(order).subspan(start, m), lr);
      ++global_step;
      ++batches;
    }
    const double val = cb.val_auc();
    hist.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val, lr_first});

    const double prev_best = stopper.best;
    const bool stop = stopper.feed(epoch, val);
    if (val > prev_best && cb.snapshot) {
      cb.snapshot();
      have_snapshot = true;
    }
    hist.stopped_epoch = epoch;
    if (stop) break;
  }
  hist.best_epoch = stopper.best_epoch;
  hist.best_val_auc = stopper.best;
  if (have_snapshot && cb.restore_best) cb.restore_best();
  return hist;
}

// ---------------------------------------------------------------------------
// Feature helpers and classical grid search
// ---------------------------------------------------------------------------

std::vector<ml::Feat4> normalized_features(std::span<const EnvelopePatch> patches,
                                           const stats::FeatureConfig& fcfg,
                                           const stats::FeatureNormalizer& norm) {
  std::vector<ml::Feat4> out(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto f = stats::apply_normalizer(norm, stats::featurize(patches[i], fcfg));
    out[i] = f.as_array();
  }
  return out;
}

namespace {

double val_auc_of(const std::vector<double>& scores, std::span<const int> y) {
  metrics::ScoredSet s;
  s.scores = scores;
  s.labels.assign(y.begin(), y.end());
  return metrics::auc(s);
}

}  // namespace

ml::SVMModel fit_svm_grid(std::span<const ml::Feat4> train_x,
                          std::span<const int> train_y,
                          std::span<const ml::Feat4> val_x,
                          std::span<const int> val_y, const SVMGrid& grid,
                          std::uint64_t seed, json* search_log) {
  if (grid.c_values.empty() || grid.gamma_values.empty())
    throw InvalidArgument("fit_svm_grid: empty grid");
  ml::SVMModel best;
  double best_auc = -1.0;
  json log = json::array();
  for (double c : grid.c_values) {
    for (double gamma : grid.gamma_values) {
      ml::SVMConfig cfg;
      cfg.c = c;
      cfg.gamma = gamma;
      cfg.tol = grid.tol;
      ml::SVMModel m = ml::train_svm(train_x, train_y, cfg, seed);
      std::vector<double> scores(val_x.size());
      for (std::size_t i = 0; i < val_x.size(); ++i)
        scores[i] = ml::svm_decision(m, val_x[i]);
      const double a = val_auc_of(scores, val_y);
      json entry;
      entry["c"] = c;
      entry["gamma"] = gamma;
      entry["val_auc"] = a;
      entry["support_vectors"] = m.support_vectors.size();
      log.push_back(entry);
      if (a > best_auc) {
        best_auc = a;
        best = std::move(m);
      }
    }
  }
  if (search_log) *search_log = std::move(log);
  return best;
}

ml::RandomForestModel fit_rf_grid(std::span<const ml::Feat4> train_x,
                                  std::span<const int> train_y,
                                  std::span<const ml::Feat4> val_x,
                                  std::span<const int> val_y, const RFGrid& grid,
                                  std::uint64_t seed, json* search_log) {
  if (grid.trees.empty() || grid.max_depths.empty())
    throw InvalidArgument("fit_rf_grid: empty grid");
  ml::RandomForestModel best;
  double best_auc = -1.0;
  json log = json::array();
  for (int trees : grid.trees) {
    for (int depth : grid.max_depths) {
      ml::RFConfig cfg;
      cfg.trees = trees;
      cfg.max_depth = depth;
      ml::RandomForestModel m = ml::train_random_forest(train_x, train_y, cfg, seed);
      std::vector<double> scores(val_x.size());
      for (std::size_t i = 0; i < val_x.size(); ++i)
        scores[i] = ml::rf_predict_proba(m, val_x[i]);
      const double a = val_auc_of(scores, val_y);
      json entry;
      entry["trees"] = trees;
      entry["max_depth"] = depth;
      entry["val_auc"] = a;
      log.push_back(entry);
      if (a > best_auc) {
        best_auc = a;
        best = std::move(m);
      }
    }
  }
  if (search_log) *search_log = std::move(log);
  return best;
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const Schedule& s) {
  j = json{};
  j["max_epochs"] = s.max_epochs;
  j["batch_size"] = s.batch_size;
  j["lr_min"] = s.lr_min;
  j["lr_max"] = s.lr_max;
  j["cycle_epochs"] = s.cycle_epochs;
  j["patience"] = s.patience;
  j["dropout"] = s.dropout;
  j["finetune_lr_scale"] = s.finetune_lr_scale;
}

namespace {

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void from_json(const json& j, Schedule& s) {
  maybe(j, "max_epochs", s.max_epochs);
  maybe(j, "batch_size", s.batch_size);
  maybe(j, "lr_min", s.lr_min);
  maybe(j, "lr_max", s.lr_max);
  maybe(j, "cycle_epochs", s.cycle_epochs);
  maybe(j, "patience", s.patience);
  maybe(j, "dropout", s.dropout);
  maybe(j, "finetune_lr_scale", s.finetune_lr_scale);
}

void to_json(json& j, const AugmentConfig& a) {
  j = json{};
  j["flip_prob"] = a.flip_prob;
  j["elastic_grid_px"] = a.elastic_grid_px;
  j["elastic_sigma_px"] = a.elastic_sigma_px;
  j["noise_sigma"] = a.noise_sigma;
}

void from_json(const json& j, AugmentConfig& a) {
  maybe(j, "flip_prob", a.flip_prob);
  maybe(j, "elastic_grid_px", a.elastic_grid_px);
  maybe(j, "elastic_sigma_px", a.elastic_sigma_px);
  maybe(j, "noise_sigma", a.noise_sigma);
}

}  // namespace qus::train
