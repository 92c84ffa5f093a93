#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "qus/common.hpp"
#include "qus/nn/checkpoint.hpp"
#include "qus/training.hpp"

namespace {

using qus::EnvelopePatch;
using qus::Label;
using qus::Rng;
using qus::train::AugmentConfig;
using qus::train::Schedule;

EnvelopePatch make_patch(int rows, int cols, Label label, Rng& rng,
                         double power = 1.0) {
  EnvelopePatch p;
  p.rows = rows;
  p.cols = cols;
  p.label = label;
  p.values.resize(static_cast<std::size_t>(rows) * cols);
  for (double& v : p.values) v = std::pow(std::abs(rng.normal()), power) + 1e-3;
  return p;
}

AugmentConfig no_augment() {
  AugmentConfig cfg;
  cfg.flip_prob = 0.0;
  cfg.elastic_sigma_px = 0.0;
  cfg.noise_sigma = 0.0;
  return cfg;
}

// Two tight 4D clusters around 0.2... and 0.8...; `spread` controls overlap.
void make_feature_blobs(std::size_t per_class, double spread, std::uint64_t seed,
                        std::vector<qus::ml::Feat4>& x, std::vector<int>& y) {
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    const double center = cls == 1 ? 0.8 : 0.2;
    for (std::size_t i = 0; i < per_class; ++i) {
      qus::ml::Feat4 f;
      for (int d = 0; d < 4; ++d) f[d] = center + spread * rng.normal();
      x.push_back(f);
      y.push_back(cls);
    }
  }
}

double auc_of(const std::vector<double>& scores, const std::vector<int>& y) {
  qus::metrics::ScoredSet s;
  s.scores = scores;
  s.labels = y;
  return qus::metrics::auc(s);
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("augment: zero-strength settings are an exact identity with no draws") {
  Rng mk(4);
  const EnvelopePatch patch = make_patch(6, 4, Label::FDS, mk);
  Rng rng(9);
  const EnvelopePatch out = qus::train::augment(patch, no_augment(), rng);
  CHECK(out.values == patch.values);
  CHECK(out.rows == patch.rows);
  CHECK(out.cols == patch.cols);
  CHECK(out.label == patch.label);
  Rng untouched(9);
  CHECK(rng.next() == untouched.next());  // no random numbers were consumed
}

TEST_CASE("flip_lateral: mirrors columns, preserves metadata, involution") {
  EnvelopePatch p;
  p.rows = 2;
  p.cols = 3;
  p.values = {1, 2, 3, 4, 5, 6};
  p.label = Label::LDS;
  p.depth_mm = 17.5;
  p.source_id = "ph-x";
  const EnvelopePatch f = qus::train::flip_lateral(p);
  CHECK(f.values == std::vector<double>{3, 2, 1, 6, 5, 4});
  CHECK(f.label == Label::LDS);
  CHECK(f.depth_mm == 17.5);
  CHECK(f.source_id == "ph-x");
  CHECK(qus::train::flip_lateral(f).values == p.values);
}

TEST_CASE("augment: certain flip equals flip_lateral and draws exactly once") {
  Rng mk(6);
  const EnvelopePatch patch = make_patch(5, 7, Label::LDS, mk);
  AugmentConfig cfg = no_augment();
  cfg.flip_prob = 1.0;
  Rng rng(13);
  const EnvelopePatch out = qus::train::augment(patch, cfg, rng);
  CHECK(out.values == qus::train::flip_lateral(patch).values);
  Rng expect(13);
  (void)expect.uniform();
  CHECK(rng.next() == expect.next());
}

TEST_CASE("augment: elastic warp stays in the value hull and is seeded") {
  Rng mk(8);
  const EnvelopePatch patch = make_patch(16, 12, Label::FDS, mk);
  AugmentConfig cfg = no_augment();
  cfg.elastic_grid_px = 4;
  cfg.elastic_sigma_px = 1.5;

  Rng r1(33), r2(33), r3(34);
  const EnvelopePatch a = qus::train::augment(patch, cfg, r1);
  const EnvelopePatch b = qus::train::augment(patch, cfg, r2);
  const EnvelopePatch c = qus::train::augment(patch, cfg, r3);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.values != patch.values);

  const auto [lo, hi] = std::minmax_element(patch.values.begin(), patch.values.end());
  for (double v : a.values) {
    CHECK(v >= *lo);
    CHECK(v <= *hi);
  }
}

TEST_CASE("augment: noise scales with the patch std and clips at zero") {
  // Alternating 8/12 gives mean 10 and std exactly 2, so noise_sigma = 0.5
  // injects unit-variance noise.
  EnvelopePatch p;
  p.rows = 32;
  p.cols = 32;
  p.label = Label::FDS;
  p.values.resize(1024);
  for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = i % 2 ? 12.0 : 8.0;

  AugmentConfig cfg = no_augment();
  cfg.noise_sigma = 0.5;
  Rng rng(55);
  const EnvelopePatch out = qus::train::augment(p, cfg, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) mean += out.values[i] - p.values[i];
  mean /= 1024.0;
  double var = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double d = out.values[i] - p.values[i] - mean;
    var += d * d;
  }
  var /= 1024.0;
  CHECK(std::abs(mean) < 0.12);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(0.15));

  // A constant patch has zero std, so the noise stage leaves it untouched.
  EnvelopePatch flat = p;
  for (double& v : flat.values) v = 3.0;
  Rng rng2(56);
  CHECK(qus::train::augment(flat, cfg, rng2).values == flat.values);

  // Near-zero values with strong noise must clip at exactly zero.
  EnvelopePatch tiny = p;
  for (std::size_t i = 0; i < tiny.values.size(); ++i)
    tiny.values[i] = i % 2 ? 0.02 : 0.0;
  AugmentConfig loud = no_augment();
  loud.noise_sigma = 10.0;
  Rng rng3(57);
  const EnvelopePatch clipped = qus::train::augment(tiny, loud, rng3);
  std::size_t zeros = 0;
  for (double v : clipped.values) {
    CHECK(v >= 0.0);
    zeros += v == 0.0 ? 1 : 0;
  }
  CHECK(zeros > 100);
}

TEST_CASE("augment: configuration and patch validation") {
  Rng mk(2);
  const EnvelopePatch patch = make_patch(4, 4, Label::FDS, mk);
  Rng rng(1);
  AugmentConfig bad = no_augment();
  bad.flip_prob = -0.1;
  CHECK_THROWS_AS(qus::train::augment(patch, bad, rng), qus::InvalidArgument);
  bad = no_augment();
  bad.flip_prob = 1.1;
  CHECK_THROWS_AS(qus::train::augment(patch, bad, rng), qus::InvalidArgument);
  bad = no_augment();
  bad.elastic_grid_px = 1;
  CHECK_THROWS_AS(qus::train::augment(patch, bad, rng), qus::InvalidArgument);
  bad = no_augment();
  bad.elastic_sigma_px = -1.0;
  CHECK_THROWS_AS(qus::train::augment(patch, bad, rng), qus::InvalidArgument);
  bad = no_augment();
  bad.noise_sigma = -0.5;
  CHECK_THROWS_AS(qus::train::augment(patch, bad, rng), qus::InvalidArgument);

  EnvelopePatch thin;
  thin.rows = 1;
  thin.cols = 8;
  thin.values.resize(8, 1.0);
  CHECK_THROWS_AS(qus::train::augment(thin, no_augment(), rng), qus::InvalidArgument);
  EnvelopePatch ragged = patch;
  ragged.values.pop_back();
  CHECK_THROWS_AS(qus::train::augment(ragged, no_augment(), rng), qus::InvalidArgument);
}

TEST_CASE("cyclic_lr: triangular wave hits the pinned values") {
  const double lo = 1e-4, hi = 1e-3;
  CHECK(qus::train::cyclic_lr(0, 8, lo, hi) == lo);
  CHECK(qus::train::cyclic_lr(4, 8, lo, hi) == hi);
  CHECK(qus::train::cyclic_lr(8, 8, lo, hi) == lo);   // periodic
  CHECK(qus::train::cyclic_lr(2, 8, lo, hi) == doctest::Approx(5.5e-4).epsilon(1e-14));
  CHECK(qus::train::cyclic_lr(6, 8, lo, hi) == doctest::Approx(5.5e-4).epsilon(1e-14));
  for (int s = 0; s < 4; ++s)  // rising then falling edges
    CHECK(qus::train::cyclic_lr(s, 8, lo, hi) < qus::train::cyclic_lr(s + 1, 8, lo, hi));
  for (int s = 4; s < 8; ++s)
    CHECK(qus::train::cyclic_lr(s, 8, lo, hi) > qus::train::cyclic_lr(s + 1, 8, lo, hi));

  CHECK_THROWS_AS(qus::train::cyclic_lr(-1, 8, lo, hi), qus::InvalidArgument);
  CHECK_THROWS_AS(qus::train::cyclic_lr(0, 1, lo, hi), qus::InvalidArgument);
  CHECK_THROWS_AS(qus::train::cyclic_lr(0, 8, 0.0, hi), qus::InvalidArgument);
  CHECK_THROWS_AS(qus::train::cyclic_lr(0, 8, hi, lo), qus::InvalidArgument);
}

TEST_CASE("early stopper: strict improvement resets patience, plateaus do not") {
  qus::train::EarlyStopper stop{3};
  const std::vector<double> vals = {0.6, 0.7, 0.65, 0.72, 0.66, 0.74,
                                    0.75, 0.75, 0.70, 0.74};
  int stopped_at = 0;
  for (int e = 1; e <= static_cast<int>(vals.size()); ++e) {
    if (stop.feed(e, vals[static_cast<std::size_t>(e - 1)])) {
      stopped_at = e;
      break;
    }
  }
  CHECK(stopped_at == 10);  // best at 7; the equal 0.75 at 8 does not reset
  CHECK(stop.best_epoch == 7);
  CHECK(stop.best == 0.75);
}

TEST_CASE("train_loop: batching, cyclic rates, snapshots, and restore") {
  Schedule sched;
  sched.max_epochs = 3;
  sched.batch_size = 4;
  sched.cycle_epochs = 1;
  sched.patience = 10;
  sched.lr_min = 0.1;
  sched.lr_max = 0.4;

  std::vector<std::vector<std::size_t>> batch_sizes;
  std::vector<std::set<std::size_t>> epoch_indices;
  std::vector<double> lrs;
  int step_calls = 0, val_calls = 0, snapshots = 0, restores = 0;

  qus::train::LoopCallbacks cb;
  cb.step = [&](std::span<const std::size_t> idx, double lr) {
    if (batch_sizes.size() < static_cast<std::size_t>(val_calls) + 1) {
      batch_sizes.emplace_back();
      epoch_indices.emplace_back();
    }
    batch_sizes.back().push_back(idx.size());
    for (std::size_t i : idx) epoch_indices.back().insert(i);
    lrs.push_back(lr);
    return static_cast<double>(++step_calls);
  };
  const std::vector<double> script = {0.5, 0.9, 0.7};
  cb.val_auc = [&] { return script[static_cast<std::size_t>(val_calls++)]; };
  cb.snapshot = [&] { ++snapshots; };
  cb.restore_best = [&] { ++restores; };

  Rng rng(1);
  const auto hist = qus::train::train_loop(10, sched, rng, cb);

  // 10 samples at batch 4: two full batches plus a remainder of 2.
  REQUIRE(batch_sizes.size() == 3);
  for (const auto& e : batch_sizes) CHECK(e == std::vector<std::size_t>{4, 4, 2});
  for (const auto& seen : epoch_indices) CHECK(seen.size() == 10);  // a permutation

  // cycle_steps = 3 steps/epoch * 1 epoch; rates follow the triangular wave.
  REQUIRE(lrs.size() == 9);
  for (std::size_t g = 0; g < lrs.size(); ++g)
    CHECK(lrs[g] == qus::train::cyclic_lr(static_cast<std::int64_t>(g), 3, 0.1, 0.4));

  REQUIRE(hist.epochs.size() == 3);
  CHECK(hist.epochs[0].train_loss == doctest::Approx(2.0));  // mean of 1,2,3
  CHECK(hist.epochs[1].train_loss == doctest::Approx(5.0));
  CHECK(hist.epochs[2].train_loss == doctest::Approx(8.0));
  CHECK(hist.epochs[0].val_auc == 0.5);
  CHECK(hist.epochs[0].lr_first == 0.1);
  CHECK(hist.epochs[1].lr_first == qus::train::cyclic_lr(3, 3, 0.1, 0.4));
  CHECK(hist.best_epoch == 2);
  CHECK(hist.best_val_auc == 0.9);
  CHECK(hist.stopped_epoch == 3);
  CHECK(val_calls == 3);
  CHECK(snapshots == 2);  // epochs 1 and 2 improved, epoch 3 did not
  CHECK(restores == 1);
}

TEST_CASE("train_loop: early stop, remainder drop, empty run, bad input") {
  Schedule sched;
  sched.max_epochs = 10;
  sched.batch_size = 4;
  sched.patience = 1;

  int snapshots = 0, restores = 0, val_calls = 0;
  std::vector<std::size_t> batch_sizes;
  qus::train::LoopCallbacks cb;
  cb.step = [&](std::span<const std::size_t> idx, double) {
    batch_sizes.push_back(idx.size());
    for (std::size_t i : idx) CHECK(i < 9);
    return 1.0;
  };
  const std::vector<double> script = {0.8, 0.7, 0.6};
  cb.val_auc = [&] { return script[static_cast<std::size_t>(val_calls++)]; };
  cb.snapshot = [&] { ++snapshots; };
  cb.restore_best = [&] { ++restores; };

  Rng rng(2);
  // 9 samples at batch 4: the trailing single-sample batch is dropped.
  const auto hist = qus::train::train_loop(9, sched, rng, cb);
  CHECK(hist.epochs.size() == 2);  // patience 1, no improvement after epoch 1
  CHECK(hist.stopped_epoch == 2);
  CHECK(hist.best_epoch == 1);
  CHECK(hist.best_val_auc == 0.8);
  CHECK(snapshots == 1);
  CHECK(restores == 1);
  REQUIRE(batch_sizes.size() == 4);  // 2 epochs x 2 kept batches
  for (std::size_t b : batch_sizes) CHECK(b == 4);

  Schedule none = sched;
  none.max_epochs = 0;
  Rng rng2(3);
  int calls = 0;
  qus::train::LoopCallbacks counting;
  counting.step = [&](std::span<const std::size_t>, double) {
    ++calls;
    return 0.0;
  };
  counting.val_auc = [&] {
    ++calls;
    return 0.0;
  };
  const auto empty = qus::train::train_loop(9, none, rng2, counting);
  CHECK(empty.epochs.empty());
  CHECK(empty.stopped_epoch == 0);
  CHECK(calls == 0);

  CHECK_THROWS_AS(qus::train::train_loop(1, sched, rng2, cb), qus::InvalidArgument);
  qus::train::LoopCallbacks missing;
  missing.val_auc = [] { return 0.0; };
  CHECK_THROWS_AS(qus::train::train_loop(9, sched, rng2, missing),
                  qus::InvalidArgument);
  Schedule bad = sched;
  bad.batch_size = 1;
  CHECK_THROWS_AS(qus::train::train_loop(9, bad, rng2, cb), qus::InvalidArgument);
}

TEST_CASE("fit_mlp: separable synthetic patches reach high val auc, reruns "
          "reproduce bit for bit") {
  // Rayleigh-like envelopes vs. heavy-tailed cubed-normal envelopes give
  // cleanly separated summary statistics.
  Rng mk(12);
  std::vector<EnvelopePatch> train_set, val_set;
  for (int i = 0; i < 20; ++i) {
    train_set.push_back(make_patch(16, 8, Label::FDS, mk, 1.0));
    train_set.push_back(make_patch(16, 8, Label::LDS, mk, 3.0));
  }
  for (int i = 0; i < 8; ++i) {
    val_set.push_back(make_patch(16, 8, Label::FDS, mk, 1.0));
    val_set.push_back(make_patch(16, 8, Label::LDS, mk, 3.0));
  }

  const qus::stats::FeatureConfig fcfg;
  std::vector<qus::stats::FeatureVector> train_feats;
  for (const auto& p : train_set) train_feats.push_back(qus::stats::featurize(p, fcfg));
  const auto norm = qus::stats::fit_normalizer(train_feats);

  Schedule sched;
  sched.max_epochs = 6;
  sched.batch_size = 8;
  sched.patience = 6;
  sched.dropout = 0.25;
  AugmentConfig aug;
  aug.elastic_grid_px = 8;
  aug.elastic_sigma_px = 1.0;

  auto run = [&](qus::nn::MLPModel<float>& model) {
    return qus::train::fit_mlp(model, train_set, val_set, fcfg, norm, sched, aug, 3);
  };
  qus::nn::MLPModel<float> m1(sched.dropout, 99);
  const auto h1 = run(m1);

  REQUIRE(!h1.epochs.empty());
  CHECK(h1.best_val_auc >= 0.95);
  CHECK(h1.best_epoch >= 1);
  CHECK(h1.stopped_epoch <= sched.max_epochs);
  // Learning rate bookkeeping: 5 full batches per epoch, 20-step cycles.
  for (const auto& e : h1.epochs)
    CHECK(e.lr_first == qus::train::cyclic_lr(5 * (e.epoch - 1), 20, sched.lr_min,
                                              sched.lr_max));

  // The model ends at the best snapshot: re-scoring the validation set
  // reproduces the best recorded AUC exactly.
  const auto scores = qus::train::score_patches(m1, val_set, fcfg, norm);
  CHECK(qus::train::auc_of_scores(scores, val_set) == h1.best_val_auc);

  qus::nn::MLPModel<float> m2(sched.dropout, 99);
  const auto h2 = run(m2);
  CHECK(qus::ckpt::flatten(m1) == qus::ckpt::flatten(m2));
  REQUIRE(h2.epochs.size() == h1.epochs.size());
  for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
    CHECK(h1.epochs[i].train_loss == h2.epochs[i].train_loss);
    CHECK(h1.epochs[i].val_auc == h2.epochs[i].val_auc);
  }
}

TEST_CASE("normalized_features matches featurize followed by the normalizer") {
  Rng mk(31);
  std::vector<EnvelopePatch> patches;
  for (int i = 0; i < 6; ++i)
    patches.push_back(make_patch(12, 10, i % 2 ? Label::FDS : Label::LDS, mk));
  const qus::stats::FeatureConfig fcfg;
  std::vector<qus::stats::FeatureVector> feats;
  for (const auto& p : patches) feats.push_back(qus::stats::featurize(p, fcfg));
  const auto norm = qus::stats::fit_normalizer(feats);

  const auto got = qus::train::normalized_features(patches, fcfg, norm);
  REQUIRE(got.size() == patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto expect =
        qus::stats::apply_normalizer(norm, qus::stats::featurize(patches[i], fcfg));
    CHECK(got[i] == expect.as_array());
    CHECK(expect.normalized);
  }
}

TEST_CASE("fit_svm_grid: logs every cell, ties keep the first entry") {
  std::vector<qus::ml::Feat4> tx, vx;
  std::vector<int> ty, vy;
  make_feature_blobs(20, 0.05, 71, tx, ty);
  make_feature_blobs(10, 0.05, 72, vx, vy);

  qus::train::SVMGrid grid;
  grid.c_values = {0.5, 5.0};
  grid.gamma_values = {0.5, 2.0};
  qus::train::json log;
  const auto m = qus::train::fit_svm_grid(tx, ty, vx, vy, grid, 7, &log);

  REQUIRE(log.size() == 4);
  CHECK(log[0]["c"] == 0.5);
  CHECK(log[0]["gamma"] == 0.5);
  CHECK(log[1]["gamma"] == 2.0);
  CHECK(log[3]["c"] == 5.0);
  for (const auto& e : log) {
    CHECK(e.contains("val_auc"));
    CHECK(e.contains("support_vectors"));
    CHECK(e["val_auc"] == 1.0);  // fully separated clusters: every cell ties
  }
  // The tie resolves to the first grid entry.
  CHECK(m.c == 0.5);
  CHECK(m.gamma == 0.5);

  // Overlapping clusters: the returned model attains the logged maximum.
  std::vector<qus::ml::Feat4> ntx, nvx;
  std::vector<int> nty, nvy;
  make_feature_blobs(25, 0.45, 81, ntx, nty);
  make_feature_blobs(15, 0.45, 82, nvx, nvy);
  qus::train::json nlog;
  const auto nm = qus::train::fit_svm_grid(ntx, nty, nvx, nvy, grid, 7, &nlog);
  std::vector<double> scores(nvx.size());
  for (std::size_t i = 0; i < nvx.size(); ++i)
    scores[i] = qus::ml::svm_decision(nm, nvx[i]);
  double best_logged = -1.0;
  for (const auto& e : nlog) best_logged = std::max(best_logged, e["val_auc"].get<double>());
  CHECK(auc_of(scores, nvy) == best_logged);

  qus::train::SVMGrid empty;
  empty.c_values.clear();
  CHECK_THROWS_AS(qus::train::fit_svm_grid(tx, ty, vx, vy, empty, 7, nullptr),
                  qus::InvalidArgument);
}

TEST_CASE("fit_rf_grid: logs every cell, ties keep the first entry") {
  std::vector<qus::ml::Feat4> tx, vx;
  std::vector<int> ty, vy;
  make_feature_blobs(20, 0.05, 91, tx, ty);
  make_feature_blobs(10, 0.05, 92, vx, vy);

  qus::train::RFGrid grid;
  grid.trees = {25, 50};
  grid.max_depths = {2, 0};
  qus::train::json log;
  const auto m = qus::train::fit_rf_grid(tx, ty, vx, vy, grid, 11, &log);

  REQUIRE(log.size() == 4);
  CHECK(log[0]["trees"] == 25);
  CHECK(log[0]["max_depth"] == 2);
  CHECK(log[1]["max_depth"] == 0);
  CHECK(log[3]["trees"] == 50);
  for (const auto& e : log) CHECK(e["val_auc"] == 1.0);
  CHECK(m.cfg.trees == 25);
  CHECK(m.cfg.max_depth == 2);

  std::vector<qus::ml::Feat4> ntx, nvx;
  std::vector<int> nty, nvy;
  make_feature_blobs(25, 0.45, 93, ntx, nty);
  make_feature_blobs(15, 0.45, 94, nvx, nvy);
  qus::train::json nlog;
  const auto nm = qus::train::fit_rf_grid(ntx, nty, nvx, nvy, grid, 11, &nlog);
  std::vector<double> scores(nvx.size());
  for (std::size_t i = 0; i < nvx.size(); ++i)
    scores[i] = qus::ml::rf_predict_proba(nm, nvx[i]);
  double best_logged = -1.0;
  for (const auto& e : nlog) best_logged = std::max(best_logged, e["val_auc"].get<double>());
  CHECK(auc_of(scores, nvy) == best_logged);

  qus::train::RFGrid empty;
  empty.max_depths.clear();
  CHECK_THROWS_AS(qus::train::fit_rf_grid(tx, ty, vx, vy, empty, 11, nullptr),
                  qus::InvalidArgument);
}

TEST_CASE("schedule: validation, finetune variant, json round trip") {
  const Schedule s;
  CHECK_NOTHROW(s.validate());
  const Schedule ft = s.finetune_variant();
  CHECK(ft.lr_min == s.lr_min * s.finetune_lr_scale);
  CHECK(ft.lr_max == s.lr_max * s.finetune_lr_scale);
  CHECK(ft.max_epochs == s.max_epochs);
  CHECK(ft.batch_size == s.batch_size);
  CHECK(ft.patience == s.patience);

  auto expect_bad = [](auto mutate) {
    Schedule bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), qus::InvalidArgument);
  };
  expect_bad([](Schedule& x) { x.max_epochs = -1; });
  expect_bad([](Schedule& x) { x.batch_size = 1; });
  expect_bad([](Schedule& x) { x.lr_min = 0.0; });
  expect_bad([](Schedule& x) { x.lr_min = 2e-3; });  // above lr_max
  expect_bad([](Schedule& x) { x.cycle_epochs = 0; });
  expect_bad([](Schedule& x) { x.patience = 0; });
  expect_bad([](Schedule& x) { x.dropout = 1.0; });
  expect_bad([](Schedule& x) { x.dropout = -0.1; });
  expect_bad([](Schedule& x) { x.finetune_lr_scale = 0.0; });
  expect_bad([](Schedule& x) { x.finetune_lr_scale = 1.5; });

  Schedule src;
  src.max_epochs = 7;
  src.batch_size = 16;
  src.lr_min = 2e-4;
  src.lr_max = 9e-4;
  src.cycle_epochs = 3;
  src.patience = 5;
  src.dropout = 0.1;
  src.finetune_lr_scale = 0.2;
  qus::train::json j = src;
  const auto back = j.get<Schedule>();
  CHECK(back.max_epochs == 7);
  CHECK(back.batch_size == 16);
  CHECK(back.lr_min == 2e-4);
  CHECK(back.lr_max == 9e-4);
  CHECK(back.cycle_epochs == 3);
  CHECK(back.patience == 5);
  CHECK(back.dropout == 0.1);
  CHECK(back.finetune_lr_scale == 0.2);

  const auto partial = qus::train::json::parse(R"({"batch_size": 16})").get<Schedule>();
  CHECK(partial.batch_size == 16);
  CHECK(partial.max_epochs == Schedule{}.max_epochs);  // untouched default
}

TEST_CASE("augment config: json round trip with partial overrides") {
  AugmentConfig src;
  src.flip_prob = 0.25;
  src.elastic_grid_px = 16;
  src.elastic_sigma_px = 1.5;
  src.noise_sigma = 0.1;
  qus::train::json j = src;
  const auto back = j.get<AugmentConfig>();
  CHECK(back.flip_prob == 0.25);
  CHECK(back.elastic_grid_px == 16);
  CHECK(back.elastic_sigma_px == 1.5);
  CHECK(back.noise_sigma == 0.1);

  const auto partial =
      qus::train::json::parse(R"({"noise_sigma": 0.0})").get<AugmentConfig>();
  CHECK(partial.noise_sigma == 0.0);
  CHECK(partial.flip_prob == AugmentConfig{}.flip_prob);
}

}  // TEST_SUITE
