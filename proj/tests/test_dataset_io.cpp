#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qus/dataset.hpp"

using namespace qus;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("qus_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EnvelopePatch make_patch(int rows, int cols, double base, Label label,
                         const std::string& src) {
  EnvelopePatch p;
  p.rows = rows;
  p.cols = cols;
  p.label = label;
  p.source_id = src;
  p.values.resize(static_cast<std::size_t>(rows) * cols);
  // Values exactly representable in float32 so the round trip is lossless.
  for (std::size_t i = 0; i < p.values.size(); ++i)
    p.values[i] = base + 0.25 * static_cast<double>(i % 64);
  return p;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("patch container round trip is lossless for float32 values") {
  const auto dir = temp_dir("patches");
  std::vector<EnvelopePatch> patches;
  patches.push_back(make_patch(4, 3, 1.0, Label::FDS, "a"));
  patches.push_back(make_patch(4, 3, 2.5, Label::LDS, "b"));
  const auto file = dir / "x.qusp";
  data::write_patches(file, patches);
  const auto loaded = data::read_patches(file);
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded[i].rows == 4);
    CHECK(loaded[i].cols == 3);
    CHECK(loaded[i].label == patches[i].label);
    REQUIRE(loaded[i].values.size() == 12);
    for (std::size_t k = 0; k < 12; ++k)
      CHECK(loaded[i].values[k] == patches[i].values[k]);
  }
}

TEST_CASE("writer rejects inconsistent patches") {
  const auto dir = temp_dir("badwrite");
  std::vector<EnvelopePatch> mixed;
  mixed.push_back(make_patch(4, 3, 1.0, Label::FDS, "a"));
  mixed.push_back(make_patch(3, 4, 1.0, Label::LDS, "b"));
  CHECK_THROWS_AS(data::write_patches(dir / "m.qusp", mixed), InvalidArgument);
  std::vector<EnvelopePatch> unlabeled;
  unlabeled.push_back(make_patch(4, 3, 1.0, Label::Unknown, "a"));
  CHECK_THROWS_AS(data::write_patches(dir / "u.qusp", unlabeled), InvalidArgument);
}

TEST_CASE("reader rejects corrupted containers") {
  const auto dir = temp_dir("corrupt");
  std::vector<EnvelopePatch> patches{make_patch(2, 2, 1.0, Label::FDS, "a")};
  const auto file = dir / "x.qusp";
  data::write_patches(file, patches);
  auto good = read_bytes(file);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(dir / "bad_magic.qusp", bad_magic);
  CHECK_THROWS_AS((void)data::read_patches(dir / "bad_magic.qusp"), IoError);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  write_bytes(dir / "trunc.qusp", truncated);
  CHECK_THROWS_AS((void)data::read_patches(dir / "trunc.qusp"), IoError);

  auto trailing = good;
  trailing.push_back(0);
  write_bytes(dir / "trail.qusp", trailing);
  CHECK_THROWS_AS((void)data::read_patches(dir / "trail.qusp"), IoError);

  auto bad_label = good;
  bad_label.back() = 7;  // label byte must be 0 or 1
  write_bytes(dir / "bad_label.qusp", bad_label);
  CHECK_THROWS_AS((void)data::read_patches(dir / "bad_label.qusp"), IoError);

  CHECK_THROWS_AS((void)data::read_patches(dir / "missing.qusp"), IoError);
}

TEST_CASE("frame container round trip") {
  const auto dir = temp_dir("frames");
  std::vector<Grid2D<double>> frames;
  Grid2D<double> f1(5, 4);
  Grid2D<double> f2(5, 4);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) {
      f1(r, c) = r + 0.5 * c;
      f2(r, c) = 2.0 * r - c;
    }
  frames.push_back(f1);
  frames.push_back(f2);
  const std::vector<Label> labels{Label::FDS, Label::LDS};
  data::write_frames(dir / "f.qusf", frames, labels);
  const auto set = data::read_frames(dir / "f.qusf");
  REQUIRE(set.frames.size() == 2);
  CHECK(set.labels == labels);
  CHECK(set.frames[0].rows == 5);
  CHECK(set.frames[0].cols == 4);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) {
      CHECK(set.frames[0](r, c) == f1(r, c));
      CHECK(set.frames[1](r, c) == f2(r, c));
    }
}

TEST_CASE("manifest round trip preserves every field") {
  const auto dir = temp_dir("manifest");
  data::Manifest m;
  m.dataset_id = "0123456789abcdef";
  m.seed = 99;
  m.patch_rows = 64;
  m.patch_cols = 16;
  m.axial_pitch_mm = 0.0154;
  m.lateral_pitch_mm = 0.15625;
  m.rescell_area_mm2 = 0.1;
  m.config = data::json{{"sim", data::json{{"x", 1}}}};
  data::SplitRecord rec;
  rec.file = "train.qusp";
  rec.count = 3;
  rec.n_fds = 2;
  rec.n_lds = 1;
  rec.sources = {"ph-0", "ph-1"};
  rec.patch_source = {0, 0, 1};
  m.splits["train"] = rec;
  data::FramesRecord fr;
  fr.file = "frames.qusf";
  fr.rows = 10;
  fr.cols = 8;
  fr.labels = {Label::FDS, Label::LDS};
  fr.sources = {"fr-0", "fr-1"};
  m.frames = fr;

  data::write_manifest(dir / "manifest.json", m);
  const auto got = data::read_manifest(dir / "manifest.json");
  CHECK(got.dataset_id == m.dataset_id);
  CHECK(got.seed == m.seed);
  CHECK(got.patch_rows == m.patch_rows);
  CHECK(got.patch_cols == m.patch_cols);
  CHECK(got.axial_pitch_mm == m.axial_pitch_mm);
  CHECK(got.lateral_pitch_mm == m.lateral_pitch_mm);
  CHECK(got.rescell_area_mm2 == m.rescell_area_mm2);
  CHECK(got.config == m.config);
  REQUIRE(got.splits.count("train") == 1);
  const auto& grec = got.splits.at("train");
  CHECK(grec.file == rec.file);
  CHECK(grec.count == rec.count);
  CHECK(grec.n_fds == rec.n_fds);
  CHECK(grec.n_lds == rec.n_lds);
  CHECK(grec.sources == rec.sources);
  CHECK(grec.patch_source == rec.patch_source);
  REQUIRE(got.frames.has_value());
  CHECK(got.frames->file == fr.file);
  CHECK(got.frames->rows == fr.rows);
  CHECK(got.frames->cols == fr.cols);
  CHECK(got.frames->labels == fr.labels);
  CHECK(got.frames->sources == fr.sources);
}

TEST_CASE("manifest reader rejects malformed json") {
  const auto dir = temp_dir("badmanifest");
  std::ofstream(dir / "manifest.json") << "{ not json";
  CHECK_THROWS_AS((void)data::read_manifest(dir / "manifest.json"), IoError);
  CHECK_THROWS_AS((void)data::read_manifest(dir / "missing.json"), IoError);
}

TEST_CASE("load_split restores source ids and cross-checks the manifest") {
  const auto dir = temp_dir("split");
  std::vector<EnvelopePatch> patches;
  patches.push_back(make_patch(2, 2, 1.0, Label::FDS, "ignored"));
  patches.push_back(make_patch(2, 2, 2.0, Label::FDS, "ignored"));
  patches.push_back(make_patch(2, 2, 3.0, Label::LDS, "ignored"));
  data::write_patches(dir / "train.qusp", patches);

  data::Manifest m;
  m.dataset_id = "feedfacefeedface";
  m.patch_rows = 2;
  m.patch_cols = 2;
  data::SplitRecord rec;
  rec.file = "train.qusp";
  rec.count = 3;
  rec.n_fds = 2;
  rec.n_lds = 1;
  rec.sources = {"ph-a", "ph-b"};
  rec.patch_source = {0, 0, 1};
  m.splits["train"] = rec;
  data::write_manifest(dir / "manifest.json", m);

  const auto loaded = data::load_split(dir, "train", m);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].source_id == "ph-a");
  CHECK(loaded[1].source_id == "ph-a");
  CHECK(loaded[2].source_id == "ph-b");

  CHECK_THROWS_AS((void)data::load_split(dir, "nope", m), InvalidArgument);

  // Tally mismatch between manifest and container must be caught.
  data::Manifest wrong = m;
  wrong.splits["train"].n_fds = 1;
  wrong.splits["train"].n_lds = 2;
  CHECK_THROWS_AS((void)data::load_split(dir, "train", wrong), IoError);

  data::Manifest wrong_count = m;
  wrong_count.splits["train"].count = 2;
  CHECK_THROWS_AS((void)data::load_split(dir, "train", wrong_count), IoError);
}

TEST_CASE("fnv-1a hashes are stable") {
  CHECK(data::hash_hex({}) == "cbf29ce484222325");
  const std::uint8_t abc[] = {'a', 'b', 'c'};
  CHECK(data::hash_hex(std::span(abc, 3)) == "e71fa2190541574b");
}

}  // TEST_SUITE
