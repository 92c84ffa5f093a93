#pragma once

#include <functional>

#include "qus/baselines.hpp"
#include "qus/envstats.hpp"
#include "qus/metrics.hpp"
#include "qus/nn/adam.hpp"
#include "qus/nn/models.hpp"

namespace qus::train {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Augmentation (training batches only): lateral flip -> coarse-grid elastic
// deformation -> additive Gaussian noise scaled by the patch std, clipped at
// zero. Zero-strength settings are exact identities and draw nothing.
// ---------------------------------------------------------------------------

struct AugmentConfig {
  double flip_prob = 0.5;
  int elastic_grid_px = 32;
  double elastic_sigma_px = 2.0;
  double noise_sigma = 0.05;  // fraction of the patch standard deviation

  void validate() const;
};

EnvelopePatch augment(const EnvelopePatch& patch, const AugmentConfig& cfg, Rng& rng);

EnvelopePatch flip_lateral(const EnvelopePatch& patch);

// ---------------------------------------------------------------------------
// Schedule: triangular cyclic learning rate + early stopping on val AUC.
// ---------------------------------------------------------------------------

struct Schedule {
  int max_epochs = 60;
  int batch_size = 64;
  double lr_min = 1e-4;
  double lr_max = 1e-3;
  int cycle_epochs = 4;  // full triangular cycle length
  int patience = 20;     // epochs without val AUC improvement
  double dropout = 0.5;
  double finetune_lr_scale = 0.1;

  void validate() const;
  Schedule finetune_variant() const;  // same schedule with scaled LR bounds
};

/// Triangular wave: lr_min at step 0, lr_max half a cycle later.
double cyclic_lr(std::int64_t step, std::int64_t cycle_steps, double lr_min,
                 double lr_max);

struct EarlyStopper {
  int patience = 20;
  int best_epoch = 0;
  double best = -1.0;

  /// Feed one epoch result (epochs are 1-based). Returns true when training
  /// should stop after this epoch. Only strict improvement resets patience.
  bool feed(int epoch, double val_auc) {
    if (val_auc > best) {
      best = val_auc;
      best_epoch = epoch;
      return false;
    }
    return epoch - best_epoch >= patience;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double lr_first = 0.0;  // learning rate of the first step of the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  int stopped_epoch = 0;
};

/// Model-agnostic epoch loop: shuffles indices, runs `step` per batch with
/// the cyclic learning rate, evaluates `val_auc` once per epoch, snapshots
/// on improvement and restores the best state at the end. Batches of size
/// < 2 (a trailing remainder) are dropped.
struct LoopCallbacks {
  std::function<double(std::span<const std::size_t>, double lr)> step;
  std::function<double()> val_auc;
  std::function<void()> snapshot;
  std::function<void()> restore_best;
};

TrainHistory train_loop(std::size_t n_train, const Schedule& sched, Rng& rng,
                        const LoopCallbacks& cb);

// ---------------------------------------------------------------------------
// Neural model fitting
// ---------------------------------------------------------------------------

namespace detail {

template <class T, class Fwd>
std::vector<double> batched_scores(std::size_t n, std::size_t chunk, Fwd&& fwd) {
  std::vector<double> scores;
  scores.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    nn::Tensor<T> p = fwd(start, m);
    for (std::size_t i = 0; i < m; ++i) scores.push_back(static_cast<double>(p.data[i]));
  }
  return scores;
}

template <class T>
struct Snapshot {
  std::vector<nn::Tensor<T>> tensors;
};

template <class Model, class T>
void take_snapshot(Model& m, Snapshot<T>& snap) {
  snap.tensors.clear();
  for (auto& p : m.params()) snap.tensors.push_back(*p.value);
  for (auto& p : m.buffers()) snap.tensors.push_back(*p.value);
}

template <class Model, class T>
void restore_snapshot(Model& m, const Snapshot<T>& snap) {
  std::size_t k = 0;
  for (auto& p : m.params()) *p.value = snap.tensors.at(k++);
  for (auto& p : m.buffers()) *p.value = snap.tensors.at(k++);
}

inline std::vector<int> int_labels(std::span<const EnvelopePatch> patches) {
  std::vector<int> y(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
    y[i] = patches[i].label == Label::FDS ? 1 : 0;
  return y;
}

}  // namespace detail

/// Featurize patches and normalize with `norm`.
std::vector<ml::Feat4> normalized_features(std::span<const EnvelopePatch> patches,
                                           const stats::FeatureConfig& fcfg,
                                           const stats::FeatureNormalizer& norm);

template <class T>
std::vector<double> score_patches(nn::CNNModel<T>& model,
                                  std::span<const EnvelopePatch> patches,
                                  std::size_t chunk = 64) {
  return detail::batched_scores<T>(patches.size(), chunk, [&](std::size_t s, std::size_t m) {
    auto x = nn::make_input<T>(patches.subspan(s, m), model.channels);
    return model.forward(x, false);
  });
}

template <class T>
std::vector<double> score_patches(nn::MLPModel<T>& model,
                                  std::span<const EnvelopePatch> patches,
                                  const stats::FeatureConfig& fcfg,
                                  const stats::FeatureNormalizer& norm,
                                  std::size_t chunk = 256) {
  const auto feats = normalized_features(patches, fcfg, norm);
  return detail::batched_scores<T>(patches.size(), chunk, [&](std::size_t s, std::size_t m) {
    nn::Tensor<T> x({m, 4});
    for (std::size_t i = 0; i < m; ++i)
      for (int j = 0; j < 4; ++j) x.data[i * 4 + j] = static_cast<T>(feats[s + i][j]);
    return model.forward(x, false);
  });
}

template <class T>
std::vector<double> score_patches(nn::FusionModel<T>& model,
                                  std::span<const EnvelopePatch> patches,
                                  const stats::FeatureConfig& fcfg,
                                  const stats::FeatureNormalizer& norm,
                                  std::size_t chunk = 64) {
  const auto feats = normalized_features(patches, fcfg, norm);
  return detail::batched_scores<T>(patches.size(), chunk, [&](std::size_t s, std::size_t m) {
    auto img = nn::make_input<T>(patches.subspan(s, m), model.cnn.channels);
    nn::Tensor<T> xf({m, 4});
    for (std::size_t i = 0; i < m; ++i)
      for (int j = 0; j < 4; ++j) xf.data[i * 4 + j] = static_cast<T>(feats[s + i][j]);
    return model.forward(img, xf, false);
  });
}

inline double auc_of_scores(const std::vector<double>& scores,
                            std::span<const EnvelopePatch> patches) {
  metrics::ScoredSet set;
  set.scores = scores;
  set.labels = detail::int_labels(patches);
  return metrics::auc(set);
}

/// Trains a CNN in place (the model keeps its constructed/loaded weights as
/// the starting point). Returns the epoch history; the model ends at the
/// best-validation-AUC snapshot.
template <class T>
TrainHistory fit_cnn(nn::CNNModel<T>& model, std::span<const EnvelopePatch> train_set,
                     std::span<const EnvelopePatch> val_set, const Schedule& sched,
                     const AugmentConfig& aug, std::uint64_t seed) {
  sched.validate();
  aug.validate();
  Rng loop_rng(splitmix64(seed ^ 0x11));
  Rng aug_rng(splitmix64(seed ^ 0x22));
  nn::Adam<T> adam;
  auto params = model.params();
  adam.init(params);
  detail::Snapshot<T> snap;

  LoopCallbacks cb;
  cb.step = [&](std::span<const std::size_t> idx, double lr) {
    std::vector<EnvelopePatch> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(augment(train_set[i], aug, aug_rng));
    auto x = nn::make_input<T>(batch, model.channels);
    auto y = nn::labels_of<T>(batch);
    auto p = model.forward(x, true);
    const double loss = nn::bce_loss(p, std::span<const T>(y));
    model.backward(y);
    adam.step(params, lr);
    return loss;
  };
  cb.val_auc = [&] { return auc_of_scores(score_patches(model, val_set), val_set); };
  cb.snapshot = [&] { detail::take_snapshot(model, snap); };
  cb.restore_best = [&] { detail::restore_snapshot(model, snap); };
  return train_loop(train_set.size(), sched, loop_rng, cb);
}

template <class T>
TrainHistory fit_mlp(nn::MLPModel<T>& model, std::span<const EnvelopePatch> train_set,
                     std::span<const EnvelopePatch> val_set,
                     const stats::FeatureConfig& fcfg,
                     const stats::FeatureNormalizer& norm, const Schedule& sched,
                     const AugmentConfig& aug, std::uint64_t seed) {
  sched.validate();
  aug.validate();
  Rng loop_rng(splitmix64(seed ^ 0x11));
  Rng aug_rng(splitmix64(seed ^ 0x22));
  nn::Adam<T> adam;
  auto params = model.params();
  adam.init(params);
  detail::Snapshot<T> snap;

  LoopCallbacks cb;
  cb.step = [&](std::span<const std::size_t> idx, double lr) {
    std::vector<EnvelopePatch> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(augment(train_set[i], aug, aug_rng));
    const auto feats = normalized_features(batch, fcfg, norm);
    nn::Tensor<T> x({batch.size(), 4});
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (int j = 0; j < 4; ++j) x.data[i * 4 + j] = static_cast<T>(feats[i][j]);
    auto y = nn::labels_of<T>(batch);
    auto p = model.forward(x, true);
    const double loss = nn::bce_loss(p, std::span<const T>(y));
    model.backward(y);
    adam.step(params, lr);
    return loss;
  };
  cb.val_auc = [&] {
    return auc_of_scores(score_patches(model, val_set, fcfg, norm), val_set);
  };
  cb.snapshot = [&] { detail::take_snapshot(model, snap); };
  cb.restore_best = [&] { detail::restore_snapshot(model, snap); };
  return train_loop(train_set.size(), sched, loop_rng, cb);
}

/// Trains the fusion head with frozen branches: each batch runs the branch
/// trunks in inference mode on the augmented patches, and only the head
/// parameters receive Adam updates.
template <class T>
TrainHistory fit_fusion_head(nn::FusionModel<T>& model,
                             std::span<const EnvelopePatch> train_set,
                             std::span<const EnvelopePatch> val_set,
                             const stats::FeatureConfig& fcfg,
                             const stats::FeatureNormalizer& norm,
                             const Schedule& sched, const AugmentConfig& aug,
                             std::uint64_t seed) {
  sched.validate();
  aug.validate();
  model.branches_frozen = true;
  Rng loop_rng(splitmix64(seed ^ 0x11));
  Rng aug_rng(splitmix64(seed ^ 0x22));
  nn::Adam<T> adam;
  auto params = model.trainable_params();
  adam.init(params);
  detail::Snapshot<T> snap;

  LoopCallbacks cb;
  cb.step = [&](std::span<const std::size_t> idx, double lr) {
    std::vector<EnvelopePatch> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(augment(train_set[i], aug, aug_rng));
    auto img = nn::make_input<T>(batch, model.cnn.channels);
    const auto feats = normalized_features(batch, fcfg, norm);
    nn::Tensor<T> xf({batch.size(), 4});
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (int j = 0; j < 4; ++j) xf.data[i * 4 + j] = static_cast<T>(feats[i][j]);
    auto y = nn::labels_of<T>(batch);
    auto p = model.forward(img, xf, true);
    const double loss = nn::bce_loss(p, std::span<const T>(y));
    model.backward(y);
    adam.step(params, lr);
    return loss;
  };
  cb.val_auc = [&] {
    return auc_of_scores(score_patches(model, val_set, fcfg, norm), val_set);
  };
  cb.snapshot = [&] { detail::take_snapshot(model, snap); };
  cb.restore_best = [&] { detail::restore_snapshot(model, snap); };
  return train_loop(train_set.size(), sched, loop_rng, cb);
}

// ---------------------------------------------------------------------------
// Classical baselines: deterministic grid search maximizing validation AUC
// (ties keep the earlier grid entry).
// ---------------------------------------------------------------------------

struct SVMGrid {
  std::vector<double> c_values{0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma_values{0.1, 1.0, 10.0};
  double tol = 1e-3;
};

struct RFGrid {
  std::vector<int> trees{100, 300};
  std::vector<int> max_depths{4, 8, 0};
};

ml::SVMModel fit_svm_grid(std::span<const ml::Feat4> train_x,
                          std::span<const int> train_y,
                          std::span<const ml::Feat4> val_x,
                          std::span<const int> val_y, const SVMGrid& grid,
                          std::uint64_t seed, json* search_log);

ml::RandomForestModel fit_rf_grid(std::span<const ml::Feat4> train_x,
                                  std::span<const int> train_y,
                                  std::span<const ml::Feat4> val_x,
                                  std::span<const int> val_y, const RFGrid& grid,
                                  std::uint64_t seed, json* search_log);

// Config (de)serialization
void to_json(json& j, const Schedule& s);
void from_json(const json& j, Schedule& s);
void to_json(json& j, const AugmentConfig& a);
void from_json(const json& j, AugmentConfig& a);

}  // namespace qus::train
