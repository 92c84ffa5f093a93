#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "qus/nn/adam.hpp"
#include "qus/nn/checkpoint.hpp"
#include "qus/nn/models.hpp"
#include "test_util.hpp"

using namespace qus;
using nn::Tensor;

namespace {

constexpr double kModelTol = 1e-4;

EnvelopePatch patch_of(int rows, int cols, std::vector<double> vals, Label lab) {
  EnvelopePatch p;
  p.rows = rows;
  p.cols = cols;
  p.values = std::move(vals);
  p.label = lab;
  return p;
}

std::vector<EnvelopePatch> random_patches(std::size_t n, int rows, int cols,
                                          Rng& rng) {
  std::vector<EnvelopePatch> out;
  for (std::size_t i = 0; i < n; ++i) {
    EnvelopePatch p;
    p.rows = rows;
    p.cols = cols;
    p.label = i % 2 == 0 ? Label::FDS : Label::LDS;
    p.values.resize(static_cast<std::size_t>(rows) * cols);
    for (auto& v : p.values) v = std::abs(rng.normal()) + 0.01;
    out.push_back(std::move(p));
  }
  return out;
}

// Model-level sweeps use a smaller step than the per-layer checks: the
// residual nets put ReLUs right after batch norm, so activations cluster at
// the kink and a wide stencil straddles it. At h = 1e-5 the estimates agree
// with backprop to ~8 significant digits. The 1e-5 floor covers parameters
// whose gradient is exactly zero by construction (conv biases cancel inside
// the following batch norm), where both estimates are pure rounding noise.
template <class Model, class Fwd>
void check_param_grads(Model& model, const Fwd& loss, Rng& rng,
                       std::size_t per_tensor) {
  for (auto& p : model.params()) {
    CAPTURE(p.name);
    for (auto i : testutil::pick_coords(p.value->numel(), per_tensor, rng)) {
      const double bp = static_cast<double>(p.grad->data[i]);
      const double fd = testutil::fd_grad(*p.value, i, loss, 1e-5);
      const double scale = std::max({std::abs(bp), std::abs(fd), 1e-5});
      CHECK(std::abs(bp - fd) / scale < kModelTol);
    }
  }
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "qus_test_models";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("nn_models") {

TEST_CASE("make_input: hand-checked channels") {
  const auto p = patch_of(2, 2, {1.0, 3.0, 2.0, 5.0}, Label::FDS);
  const std::vector<EnvelopePatch> ps{p};

  const auto xa = nn::make_input<double>(ps, nn::Channels::A);
  REQUIRE(xa.shape == std::vector<std::size_t>{1, 1, 2, 2});
  CHECK(xa.data[0] == 0.0);    // (1-1)/4
  CHECK(xa.data[1] == 0.5);    // (3-1)/4
  CHECK(xa.data[2] == 0.25);   // (2-1)/4
  CHECK(xa.data[3] == 1.0);    // (5-1)/4

  const auto xl = nn::make_input<double>(ps, nn::Channels::AlogA);
  REQUIRE(xl.shape == std::vector<std::size_t>{1, 1, 2, 2});
  CHECK(xl.data[0] == 0.0);  // 0 * log(1e-6)
  CHECK(xl.data[1] == doctest::Approx(0.5 * std::log(0.5)).epsilon(1e-12));
  CHECK(xl.data[2] == doctest::Approx(0.25 * std::log(0.25)).epsilon(1e-12));
  CHECK(xl.data[3] == 0.0);  // 1 * log(1)

  const auto xb = nn::make_input<double>(ps, nn::Channels::Both);
  REQUIRE(xb.shape == std::vector<std::size_t>{1, 2, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(xb.data[i] == xa.data[i]);
    CHECK(xb.data[4 + i] == xl.data[i]);
  }

  const auto flat = patch_of(2, 2, {3.0, 3.0, 3.0, 3.0}, Label::FDS);
  CHECK_THROWS_AS((void)nn::make_input<double>(std::vector<EnvelopePatch>{flat},
                                               nn::Channels::A),
                  DegenerateStatistic);
  CHECK_THROWS_AS(
      (void)nn::make_input<double>(std::vector<EnvelopePatch>{}, nn::Channels::A),
      InvalidArgument);
}

TEST_CASE("labels_of maps classes to 0/1 and rejects unknowns") {
  std::vector<EnvelopePatch> ps{patch_of(2, 2, {1, 2, 3, 4}, Label::FDS),
                                patch_of(2, 2, {1, 2, 3, 4}, Label::LDS)};
  const auto y = nn::labels_of<double>(ps);
  CHECK(y == std::vector<double>{1.0, 0.0});
  ps[1].label = Label::Unknown;
  CHECK_THROWS_AS((void)nn::labels_of<double>(ps), InvalidArgument);
}

TEST_CASE("channel names round trip") {
  for (auto ch : {nn::Channels::A, nn::Channels::AlogA, nn::Channels::Both})
    CHECK(nn::channels_from_name(nn::channels_name(ch)) == ch);
  CHECK(nn::channel_count(nn::Channels::Both) == 2);
  CHECK(nn::channel_count(nn::Channels::A) == 1);
  CHECK_THROWS_AS((void)nn::channels_from_name("rgb"), InvalidArgument);
}

TEST_CASE("mlp: full-model gradient check and batch-1 rejection") {
  nn::MLPModel<double> mlp(0.0, 2024);
  Tensor<double> x({3, 4});
  Rng rng(8);
  testutil::fill_uniform(x, rng);
  const std::vector<double> labels{1.0, 0.0, 1.0};

  (void)mlp.forward(x, true);
  mlp.backward(std::span<const double>(labels));

  const auto loss = [&] {
    return nn::bce_loss(mlp.forward(x, true), std::span<const double>(labels));
  };
  check_param_grads(mlp, loss, rng, 6);

  Tensor<double> one({1, 4});
  testutil::fill_uniform(one, rng);
  CHECK_THROWS_AS((void)mlp.forward(one, true), InvalidArgument);
  Tensor<double> bad({2, 5});
  CHECK_THROWS_AS((void)mlp.forward(bad, true), InvalidArgument);
}

TEST_CASE("cnn: full-model gradient check for every channel configuration") {
  Rng rng(99);
  for (auto ch : {nn::Channels::A, nn::Channels::AlogA, nn::Channels::Both}) {
    CAPTURE(nn::channels_name(ch));
    nn::CNNModel<double> cnn(ch, 0.0, 7 + static_cast<std::uint64_t>(ch));
    Tensor<double> x({2, nn::channel_count(ch), 8, 8});
    testutil::fill_uniform(x, rng, 0.0, 1.0);
    const std::vector<double> labels{1.0, 0.0};

    (void)cnn.forward(x, true);
    cnn.backward(std::span<const double>(labels));

    const auto loss = [&] {
      return nn::bce_loss(cnn.forward(x, true), std::span<const double>(labels));
    };
    check_param_grads(cnn, loss, rng, 2);
  }
}

TEST_CASE("cnn: input geometry is validated") {
  nn::CNNModel<double> cnn(nn::Channels::A, 0.0, 1);
  Rng rng(4);
  Tensor<double> not_multiple({2, 1, 12, 8});
  testutil::fill_uniform(not_multiple, rng);
  CHECK_THROWS_AS((void)cnn.forward(not_multiple, false), InvalidArgument);
  Tensor<double> too_small({2, 1, 8, 4});
  testutil::fill_uniform(too_small, rng);
  CHECK_THROWS_AS((void)cnn.forward(too_small, false), InvalidArgument);
  Tensor<double> wrong_ch({2, 2, 8, 8});
  testutil::fill_uniform(wrong_ch, rng);
  CHECK_THROWS_AS((void)cnn.forward(wrong_ch, false), InvalidArgument);
}

TEST_CASE("fusion: gradient check with unfrozen branches") {
  nn::FusionModel<double> fusion(nn::Channels::A, 0.0, 31);
  fusion.branches_frozen = false;
  Rng rng(12);
  Tensor<double> ximg({2, 1, 8, 8});
  testutil::fill_uniform(ximg, rng, 0.0, 1.0);
  Tensor<double> xfeat({2, 4});
  testutil::fill_uniform(xfeat, rng);
  const std::vector<double> labels{1.0, 0.0};

  (void)fusion.forward(ximg, xfeat, true);
  fusion.backward(std::span<const double>(labels));

  const auto loss = [&] {
    return nn::bce_loss(fusion.forward(ximg, xfeat, true),
                        std::span<const double>(labels));
  };
  check_param_grads(fusion, loss, rng, 2);
}

TEST_CASE("fusion: frozen branches stay bit-identical under head training") {
  nn::FusionModel<float> fusion(nn::Channels::Both, 0.0, 5);
  REQUIRE(fusion.branches_frozen);

  Rng rng(77);
  Tensor<float> ximg({4, 2, 8, 8});
  testutil::fill_uniform(ximg, rng, 0.0, 1.0);
  Tensor<float> xfeat({4, 4});
  testutil::fill_uniform(xfeat, rng);
  const std::vector<float> labels{1.0f, 0.0f, 1.0f, 0.0f};

  // A freshly built head has a zero final layer: output is exactly 1/2.
  const auto p0 = fusion.forward(ximg, xfeat, false);
  for (float v : p0.data) CHECK(v == 0.5f);

  // Snapshot branch parameters, then take a few head-only optimizer steps.
  std::vector<std::vector<float>> before;
  for (auto& p : fusion.cnn.params()) before.push_back(p.value->data);
  for (auto& p : fusion.mlp.params()) before.push_back(p.value->data);

  nn::Adam<float> opt;
  auto trainable = fusion.trainable_params();
  CHECK(trainable.size() == 4);  // head only
  opt.init(trainable);
  for (int step = 0; step < 3; ++step) {
    (void)fusion.forward(ximg, xfeat, true);
    fusion.backward(std::span<const float>(labels));
    opt.step(trainable, 1e-2);
  }

  std::size_t k = 0;
  for (auto& p : fusion.cnn.params()) CHECK(p.value->data == before[k++]);
  for (auto& p : fusion.mlp.params()) CHECK(p.value->data == before[k++]);

  // The head did move, and with it the output.
  const auto p1 = fusion.forward(ximg, xfeat, false);
  bool moved = false;
  for (float v : p1.data) moved = moved || v != 0.5f;
  CHECK(moved);

  fusion.branches_frozen = false;
  CHECK(fusion.trainable_params().size() == fusion.params().size());
}

TEST_CASE("model initialization is seed-deterministic") {
  nn::MLPModel<float> a(0.1, 42), b(0.1, 42), c(0.1, 43);
  CHECK(ckpt::flatten(a) == ckpt::flatten(b));
  CHECK(ckpt::flatten(a) != ckpt::flatten(c));

  nn::CNNModel<float> ca(nn::Channels::A, 0.1, 42), cb(nn::Channels::A, 0.1, 42);
  CHECK(ckpt::flatten(ca) == ckpt::flatten(cb));
}

TEST_CASE("flatten/unflatten round trip is exact") {
  nn::MLPModel<float> src(0.2, 11);
  // Touch the running stats so buffers are non-trivial.
  Tensor<float> x({4, 4});
  Rng rng(2);
  testutil::fill_uniform(x, rng);
  (void)src.forward(x, true);

  const auto blob = ckpt::flatten(src);
  nn::MLPModel<float> dst(0.2, 99);
  ckpt::unflatten(dst, blob);
  CHECK(ckpt::flatten(dst) == blob);

  // Manifest validation distinguishes architectures.
  const auto manifest = ckpt::param_manifest(src);
  CHECK_NOTHROW(ckpt::validate_manifest(dst, manifest));
  nn::CNNModel<float> other(nn::Channels::A, 0.2, 1);
  CHECK_THROWS_AS(ckpt::validate_manifest(other, manifest), IoError);

  // Truncated and oversized blobs are rejected.
  auto short_blob = blob;
  short_blob.pop_back();
  CHECK_THROWS_AS(ckpt::unflatten(dst, short_blob), IoError);
  auto long_blob = blob;
  long_blob.push_back(0.0f);
  CHECK_THROWS_AS(ckpt::unflatten(dst, long_blob), IoError);
}

TEST_CASE("model file round trip and corruption detection") {
  const auto path = temp_file("roundtrip.qusm");
  ckpt::json header;
  header["format"] = "qus-model";
  header["model_id"] = "test";
  const std::vector<float> blob{1.0f, -2.5f, 0.25f};
  ckpt::save_model_file(path, header, blob);

  const auto loaded = ckpt::load_model_file(path);
  CHECK(loaded.header == header);
  CHECK(loaded.blob == blob);

  // Corrupt the magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS((void)ckpt::load_model_file(path), IoError);

  // Truncate mid-header.
  ckpt::save_model_file(path, header, blob);
  std::filesystem::resize_file(path, 10);
  CHECK_THROWS_AS((void)ckpt::load_model_file(path), IoError);

  // Misaligned blob tail.
  ckpt::save_model_file(path, header, blob);
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.put('\0');
  }
  CHECK_THROWS_AS((void)ckpt::load_model_file(path), IoError);

  CHECK_THROWS_AS((void)ckpt::load_model_file(temp_file("missing.qusm")), IoError);
}

TEST_CASE("mlp inference on stats built from patches is finite and bounded") {
  Rng rng(3);
  auto patches = random_patches(6, 8, 8, rng);
  const auto x = nn::make_input<float>(patches, nn::Channels::A);
  nn::CNNModel<float> cnn(nn::Channels::A, 0.0, 21);
  const auto p = cnn.forward(x, false);
  REQUIRE(p.numel() == 6);
  for (float v : p.data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

}  // TEST_SUITE
