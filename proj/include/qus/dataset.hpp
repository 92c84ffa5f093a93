#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qus/common.hpp"

namespace qus::data {

using json = nlohmann::ordered_json;

// On-disk layout of a dataset directory:
//   manifest.json            metadata, config echo, split descriptions
//   train.qusp / val.qusp / test.qusp   patch containers
//   frames.qusf              optional full envelope frames
//
// QUSP container (little-endian):
//   bytes 0..3   magic "QUSP"
//   u32          patch count
//   u32          rows
//   u32          cols
//   then count*rows*cols float32 (row-major per patch)
//   then count label bytes (0 = LDS, 1 = FDS)
//
// QUSF is identical except the magic is "QUSF" and each record is a full
// frame rather than a patch.

struct SplitRecord {
  std::string file;
  std::size_t count = 0;
  std::size_t n_fds = 0;
  std::size_t n_lds = 0;
  std::vector<std::string> sources;          // phantom ids feeding this split
  std::vector<std::uint32_t> patch_source;   // per patch: index into sources
};

struct FramesRecord {
  std::string file;
  int rows = 0;
  int cols = 0;
  std::vector<Label> labels;
  std::vector<std::string> sources;
};

struct Manifest {
  std::string dataset_id;
  std::uint64_t seed = 0;
  int patch_rows = 0;
  int patch_cols = 0;
  double axial_pitch_mm = 0.0;
  double lateral_pitch_mm = 0.0;
  double rescell_area_mm2 = 0.0;
  json config;  // echo of the generating configuration
  std::map<std::string, SplitRecord> splits;
  std::optional<FramesRecord> frames;
};

void write_patches(const std::filesystem::path& path,
                   std::span<const EnvelopePatch> patches);

/// Reads a QUSP container. source_id/depth are not stored in the container;
/// load_split() fills source ids back in from the manifest.
std::vector<EnvelopePatch> read_patches(const std::filesystem::path& path);

void write_frames(const std::filesystem::path& path,
                  std::span<const Grid2D<double>> frames,
                  std::span<const Label> labels);

struct FrameSet {
  std::vector<Grid2D<double>> frames;
  std::vector<Label> labels;
};

FrameSet read_frames(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Loads one split of a dataset directory, restoring per-patch source ids
/// from the manifest and cross-checking counts and label tallies.
std::vector<EnvelopePatch> load_split(const std::filesystem::path& dataset_dir,
                                      const std::string& split,
                                      const Manifest& manifest);

std::string hash_hex(std::span<const std::uint8_t> bytes);

}  // namespace qus::data
