// Exercises the shared library strictly through the public C header: status
// codes, the thread-local error message, and a small end-to-end run in a
// temporary directory. Nothing here may touch the C++ API.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "qus/qus.h"

namespace fs = std::filesystem;

namespace {

const char* kMicroConfig = R"({
  "sim": {"phantom_width_mm": 8.0, "phantom_depth_mm": 8.0,
          "focal_depth_mm": 4.0, "patch_rows": 16, "patch_cols": 8},
  "dataset": {"fds_phantoms": 2, "lds_phantoms": 2,
              "val_phantom_fraction": 0.25,
              "test_fds_phantoms": 1, "test_lds_phantoms": 1,
              "train_patches": 24, "val_patches": 12, "test_patches": 10,
              "frames": 2},
  "train": {"max_epochs": 2, "batch_size": 8, "patience": 4,
            "cycle_epochs": 2, "dropout": 0.1},
  "svm_grid": {"c_values": [1.0], "gamma_values": [1.0]},
  "rf_grid": {"trees": [10], "max_depths": [3]},
  "eval": {"bootstrap_resamples": 100}
})";

const char* kZeroEpochConfig = R"({"train": {"max_epochs": 0}})";

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "qus_test_capi";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// 16x8 patch of varied positive samples; any fixed sequence works, the tests
// only rely on determinism.
std::vector<double> demo_patch() {
  std::vector<double> v(16 * 8);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 0.05 + static_cast<double>((i * 37) % 101) / 100.0;
  return v;
}

bool has_error_message() { return std::strlen(qus_last_error()) > 0; }

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("version string") {
  REQUIRE(qus_version() != nullptr);
  CHECK(std::string(qus_version()) == "0.1.0");
  REQUIRE(qus_last_error() != nullptr);
}

TEST_CASE("patch features: values, defaults, failure codes") {
  // Half zeros, half twos: intensity mean 2 and variance 4, so the Nakagami
  // shape estimate is exactly 1 and the deviation statistic is exactly 0.
  std::vector<double> two_level(16);
  for (std::size_t i = 0; i < two_level.size(); ++i)
    two_level[i] = (i % 2 == 0) ? 0.0 : 2.0;
  double f[4] = {-1, -1, -1, -1};
  REQUIRE(qus_patch_features(two_level.data(), 4, 4, 0.5, 100, f) == QUS_OK);
  CHECK(!has_error_message());
  CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-12));        // snr of sqrt(A)
  CHECK(f[1] == doctest::Approx(0.0).epsilon(1e-12));        // symmetric -> no skew
  CHECK(f[2] == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // two equal bins
  CHECK(f[3] == 0.0);

  // v <= 0 and entropy_bins <= 0 select the defaults (0.5, 100 bins).
  double g[4];
  REQUIRE(qus_patch_features(two_level.data(), 4, 4, 0.0, 0, g) == QUS_OK);
  for (int i = 0; i < 4; ++i) CHECK(g[i] == f[i]);
  REQUIRE(qus_patch_features(two_level.data(), 4, 4, -3.0, -7, g) == QUS_OK);
  for (int i = 0; i < 4; ++i) CHECK(g[i] == f[i]);
  // A different exponent changes the amplitude statistics.
  REQUIRE(qus_patch_features(two_level.data(), 4, 4, 1.0, 100, g) == QUS_OK);
  CHECK(g[0] != f[0]);

  CHECK(qus_patch_features(nullptr, 4, 4, 0.5, 100, f) == QUS_ERR_USAGE);
  CHECK(has_error_message());
  CHECK(qus_patch_features(two_level.data(), 4, 4, 0.5, 100, nullptr) ==
        QUS_ERR_USAGE);
  CHECK(qus_patch_features(two_level.data(), 1, 16, 0.5, 100, f) == QUS_ERR_USAGE);
  CHECK(qus_patch_features(two_level.data(), 16, 1, 0.5, 100, f) == QUS_ERR_USAGE);

  // Degenerate content is a data error, not a usage error.
  std::vector<double> flat(16, 1.0);
  CHECK(qus_patch_features(flat.data(), 4, 4, 0.5, 100, f) == QUS_ERR_DATA);
  CHECK(has_error_message());
  std::vector<double> zeros(16, 0.0);
  CHECK(qus_patch_features(zeros.data(), 4, 4, 0.5, 100, f) == QUS_ERR_DATA);

  // The next success clears the sticky message.
  REQUIRE(qus_patch_features(two_level.data(), 4, 4, 0.5, 100, f) == QUS_OK);
  CHECK(!has_error_message());
}

TEST_CASE("end to end: simulate, featurize, train, eval, map, finetune") {
  const fs::path& root = work_dir();
  const std::string data = (root / "data").string();

  REQUIRE(qus_simulate(kMicroConfig, 77, data.c_str()) == QUS_OK);
  CHECK(!has_error_message());
  CHECK(fs::exists(root / "data" / "manifest.json"));
  CHECK(fs::exists(root / "data" / "train.qusp"));
  CHECK(fs::exists(root / "data" / "frames.qusf"));

  CHECK(qus_simulate("{not json", 77, (root / "x").string().c_str()) ==
        QUS_ERR_USAGE);
  CHECK(qus_simulate(kMicroConfig, 77, nullptr) == QUS_ERR_USAGE);
  CHECK(qus_simulate(kMicroConfig, 77, "") == QUS_ERR_USAGE);

  const std::string feat = (root / "feat").string();
  REQUIRE(qus_featurize(data.c_str(), "val", kMicroConfig, feat.c_str()) == QUS_OK);
  CHECK(fs::exists(root / "feat" / "features_val.csv"));
  CHECK(qus_featurize(data.c_str(), "bogus", kMicroConfig,
                      (root / "f2").string().c_str()) == QUS_ERR_USAGE);
  CHECK(qus_featurize((root / "missing").string().c_str(), "val", kMicroConfig,
                      (root / "f3").string().c_str()) == QUS_ERR_DATA);

  const std::string mdir = (root / "mlp").string();
  REQUIRE(qus_train("mlp", data.c_str(), kMicroConfig, 5, mdir.c_str(), nullptr,
                    nullptr) == QUS_OK);
  const std::string mlp_ckpt = (root / "mlp" / "mlp.qusm").string();
  CHECK(fs::exists(mlp_ckpt));
  const std::string sdir = (root / "svm").string();
  REQUIRE(qus_train("svm", data.c_str(), kMicroConfig, 5, sdir.c_str(), nullptr,
                    nullptr) == QUS_OK);
  const std::string svm_ckpt = (root / "svm" / "svm.qusm").string();
  CHECK(qus_train("bogus", data.c_str(), kMicroConfig, 5,
                  (root / "m2").string().c_str(), nullptr, nullptr) ==
        QUS_ERR_USAGE);
  // Branch checkpoints are a fusion-only option.
  CHECK(qus_train("mlp", data.c_str(), kMicroConfig, 5,
                  (root / "m3").string().c_str(), mlp_ckpt.c_str(), nullptr) ==
        QUS_ERR_USAGE);

  const std::string edir = (root / "eval").string();
  REQUIRE(qus_eval(mlp_ckpt.c_str(), data.c_str(), "test", kMicroConfig, 9,
                   edir.c_str()) == QUS_OK);
  CHECK(fs::exists(root / "eval" / "report.json"));
  CHECK(fs::exists(root / "eval" / "roc.csv"));
  CHECK(qus_eval((root / "nope.qusm").string().c_str(), data.c_str(), "test",
                 kMicroConfig, 9, (root / "e2").string().c_str()) == QUS_ERR_DATA);

  const std::string frames = (root / "data" / "frames.qusf").string();
  const std::string mapdir = (root / "map").string();
  REQUIRE(qus_map(mlp_ckpt.c_str(), frames.c_str(), 0, 0.25, mapdir.c_str()) ==
          QUS_OK);
  CHECK(fs::exists(root / "map" / "map.csv"));
  CHECK(fs::exists(root / "map" / "map.pgm"));
  CHECK(qus_map(mlp_ckpt.c_str(), frames.c_str(), 99, 0.25,
                (root / "map2").string().c_str()) == QUS_ERR_USAGE);
  CHECK(qus_map(mlp_ckpt.c_str(), frames.c_str(), 0, 1.0,
                (root / "map3").string().c_str()) == QUS_ERR_USAGE);
  CHECK(qus_map(mlp_ckpt.c_str(), (root / "missing.qusf").string().c_str(), 0, 0.25,
                (root / "map4").string().c_str()) == QUS_ERR_DATA);

  // Zero-epoch finetune copies the checkpoint; classical models are rejected.
  const std::string ftdir = (root / "ft").string();
  REQUIRE(qus_finetune(mlp_ckpt.c_str(), data.c_str(), nullptr, kZeroEpochConfig,
                       3, ftdir.c_str()) == QUS_OK);
  CHECK(fs::exists(root / "ft" / "mlp-finetuned.qusm"));
  CHECK(qus_finetune(svm_ckpt.c_str(), data.c_str(), nullptr, kZeroEpochConfig, 3,
                     (root / "ft2").string().c_str()) == QUS_ERR_USAGE);
}

TEST_CASE("model handles: open, id, score, close") {
  const fs::path& root = work_dir();
  const std::string mlp_ckpt = (root / "mlp" / "mlp.qusm").string();
  REQUIRE(fs::exists(mlp_ckpt));  // produced by the end-to-end case

  qus_model* model = nullptr;
  REQUIRE(qus_model_open(mlp_ckpt.c_str(), &model) == QUS_OK);
  REQUIRE(model != nullptr);
  REQUIRE(qus_model_id(model) != nullptr);
  CHECK(std::string(qus_model_id(model)) == "mlp");

  const auto patch = demo_patch();
  double p1 = -1.0, p2 = -1.0;
  REQUIRE(qus_model_score(model, patch.data(), 16, 8, &p1) == QUS_OK);
  CHECK(p1 > 0.0);
  CHECK(p1 < 1.0);
  REQUIRE(qus_model_score(model, patch.data(), 16, 8, &p2) == QUS_OK);
  CHECK(p1 == p2);  // bit-for-bit deterministic

  CHECK(qus_model_score(nullptr, patch.data(), 16, 8, &p1) == QUS_ERR_USAGE);
  CHECK(qus_model_score(model, nullptr, 16, 8, &p1) == QUS_ERR_USAGE);
  CHECK(qus_model_score(model, patch.data(), 16, 8, nullptr) == QUS_ERR_USAGE);
  std::vector<double> flat(16 * 8, 2.5);
  CHECK(qus_model_score(model, flat.data(), 16, 8, &p1) == QUS_ERR_DATA);

  qus_model* missing = model;  // must be reset to null on failure
  CHECK(qus_model_open((root / "absent.qusm").string().c_str(), &missing) ==
        QUS_ERR_DATA);
  CHECK(missing == nullptr);
  CHECK(qus_model_open(mlp_ckpt.c_str(), nullptr) == QUS_ERR_USAGE);
  CHECK(qus_model_id(nullptr) == nullptr);

  qus_model_close(model);
  qus_model_close(nullptr);  // a no-op, like free(NULL)
}

}  // TEST_SUITE
