#include "qus/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace qus::data {

namespace {

void put_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return is;
}

void write_container(const std::filesystem::path& path, const char* magic,
                     std::size_t count, int rows, int cols,
                     const std::function<const double*(std::size_t)>& values_of,
                     const std::function<Label(std::size_t)>& label_of) {
  auto os = open_out(path);
  os.write(magic, 4);
  put_u32(os, static_cast<std::uint32_t>(count));
  put_u32(os, static_cast<std::uint32_t>(rows));
  put_u32(os, static_cast<std::uint32_t>(cols));
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  std::vector<float> buf(per);
  for (std::size_t i = 0; i < count; ++i) {
    const double* v = values_of(i);
    for (std::size_t j = 0; j < per; ++j) buf[j] = static_cast<float>(v[j]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(per * sizeof(float)));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const char b = static_cast<char>(label_of(i));
    os.write(&b, 1);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

struct RawContainer {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<float> values;  // count*rows*cols
  std::vector<Label> labels;
};

RawContainer read_container(const std::filesystem::path& path, const char* magic) {
  auto is = open_in(path);
  char m[4];
  is.read(m, 4);
  if (!is || std::memcmp(m, magic, 4) != 0)
    throw IoError("bad magic in " + path.string());
  RawContainer c;
  c.count = get_u32(is);
  c.rows = get_u32(is);
  c.cols = get_u32(is);
  if (!is || c.rows == 0 || c.cols == 0)
    throw IoError("bad header in " + path.string());
  const std::size_t per = static_cast<std::size_t>(c.rows) * c.cols;
  c.values.resize(per * c.count);
  is.read(reinterpret_cast<char*>(c.values.data()),
          static_cast<std::streamsize>(c.values.size() * sizeof(float)));
  std::vector<char> lab(c.count);
  is.read(lab.data(), static_cast<std::streamsize>(c.count));
  if (!is) throw IoError("truncated container: " + path.string());
  char extra;
  if (is.read(&extra, 1))
    throw IoError("trailing bytes in container: " + path.string());
  c.labels.reserve(c.count);
  for (char b : lab) {
    if (b != 0 && b != 1) throw IoError("bad label byte in " + path.string());
    c.labels.push_back(static_cast<Label>(b));
  }
  return c;
}

}  // namespace

void write_patches(const std::filesystem::path& path,
                   std::span<const EnvelopePatch> patches) {
  if (patches.empty()) throw InvalidArgument("write_patches: empty patch list");
  const int rows = patches[0].rows, cols = patches[0].cols;
  for (const auto& p : patches) {
    if (p.rows != rows || p.cols != cols)
      throw InvalidArgument("write_patches: mixed patch shapes");
    if (p.label != Label::LDS && p.label != Label::FDS)
      throw InvalidArgument("write_patches: unlabeled patch");
  }
  write_container(
      path, "QUSP", patches.size(), rows, cols,
      [&](std::size_t i) { return patches[i].values.data(); },
      [&](std::size_t i) { return patches[i].label; });
}

std::vector<EnvelopePatch> read_patches(const std::filesystem::path& path) {
  RawContainer c = read_container(path, "QUSP");
  std::vector<EnvelopePatch> out(c.count);
  const std::size_t per = static_cast<std::size_t>(c.rows) * c.cols;
  for (std::uint32_t i = 0; i < c.count; ++i) {
    auto& p = out[i];
    p.rows = static_cast<int>(c.rows);
    p.cols = static_cast<int>(c.cols);
    p.values.resize(per);
    for (std::size_t j = 0; j < per; ++j)
      p.values[j] = static_cast<double>(c.values[i * per + j]);
    p.label = c.labels[i];
  }
  return out;
}

void write_frames(const std::filesystem::path& path,
                  std::span<const Grid2D<double>> frames,
                  std::span<const Label> labels) {
  if (frames.empty()) throw InvalidArgument("write_frames: empty frame list");
  if (frames.size() != labels.size())
    throw InvalidArgument("write_frames: frame/label size mismatch");
  const int rows = frames[0].rows, cols = frames[0].cols;
  for (const auto& f : frames)
    if (f.rows != rows || f.cols != cols)
      throw InvalidArgument("write_frames: mixed frame shapes");
  write_container(
      path, "QUSF", frames.size(), rows, cols,
      [&](std::size_t i) { return frames[i].data.data(); },
      [&](std::size_t i) { return labels[i]; });
}

FrameSet read_frames(const std::filesystem::path& path) {
  RawContainer c = read_container(path, "QUSF");
  FrameSet fs;
  const std::size_t per = static_cast<std::size_t>(c.rows) * c.cols;
  for (std::uint32_t i = 0; i < c.count; ++i) {
    Grid2D<double> g(static_cast<int>(c.rows), static_cast<int>(c.cols));
    for (std::size_t j = 0; j < per; ++j)
      g.data[j] = static_cast<double>(c.values[i * per + j]);
    fs.frames.push_back(std::move(g));
  }
  fs.labels = std::move(c.labels);
  return fs;
}

namespace {

json split_to_json(const SplitRecord& s) {
  json j;
  j["file"] = s.file;
  j["count"] = s.count;
  j["fds"] = s.n_fds;
  j["lds"] = s.n_lds;
  j["sources"] = s.sources;
  j["patch_source"] = s.patch_source;
  return j;
}

SplitRecord split_from_json(const json& j) {
  SplitRecord s;
  s.file = j.at("file").get<std::string>();
  s.count = j.at("count").get<std::size_t>();
  s.n_fds = j.at("fds").get<std::size_t>();
  s.n_lds = j.at("lds").get<std::size_t>();
  s.sources = j.at("sources").get<std::vector<std::string>>();
  s.patch_source = j.at("patch_source").get<std::vector<std::uint32_t>>();
  return s;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  json j;
  j["format"] = "qus-dataset";
  j["format_version"] = 1;
  j["tool_version"] = kVersion;
  j["dataset_id"] = m.dataset_id;
  j["seed"] = m.seed;
  j["patch_rows"] = m.patch_rows;
  j["patch_cols"] = m.patch_cols;
  j["axial_pitch_mm"] = m.axial_pitch_mm;
  j["lateral_pitch_mm"] = m.lateral_pitch_mm;
  j["rescell_area_mm2"] = m.rescell_area_mm2;
  j["config"] = m.config;
  json splits;
  for (const auto& [name, rec] : m.splits) splits[name] = split_to_json(rec);
  j["splits"] = splits;
  if (m.frames) {
    json f;
    f["file"] = m.frames->file;
    f["rows"] = m.frames->rows;
    f["cols"] = m.frames->cols;
    json labs = json::array();
    for (Label l : m.frames->labels) labs.push_back(static_cast<int>(l));
    f["labels"] = labs;
    f["sources"] = m.frames->sources;
    j["frames"] = f;
  }
  auto os = open_out(path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  auto is = open_in(path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw IoError("bad manifest " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "qus-dataset")
      throw IoError("not a dataset manifest: " + path.string());
    Manifest m;
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.patch_rows = j.at("patch_rows").get<int>();
    m.patch_cols = j.at("patch_cols").get<int>();
    m.axial_pitch_mm = j.at("axial_pitch_mm").get<double>();
    m.lateral_pitch_mm = j.at("lateral_pitch_mm").get<double>();
    m.rescell_area_mm2 = j.at("rescell_area_mm2").get<double>();
    m.config = j.at("config");
    for (const auto& [name, rec] : j.at("splits").items())
      m.splits[name] = split_from_json(rec);
    if (j.contains("frames")) {
      const auto& f = j.at("frames");
      FramesRecord fr;
      fr.file = f.at("file").get<std::string>();
      fr.rows = f.at("rows").get<int>();
      fr.cols = f.at("cols").get<int>();
      for (const auto& l : f.at("labels")) fr.labels.push_back(static_cast<Label>(l.get<int>()));
      fr.sources = f.at("sources").get<std::vector<std::string>>();
      m.frames = std::move(fr);
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError("bad manifest " + path.string() + ": " + e.what());
  }
}

std::vector<EnvelopePatch> load_split(const std::filesystem::path& dataset_dir,
                                      const std::string& split,
                                      const Manifest& manifest) {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end())
    throw InvalidArgument("unknown split '" + split + "'");
  const SplitRecord& rec = it->second;
  auto patches = read_patches(dataset_dir / rec.file);
  if (patches.size() != rec.count)
    throw IoError("split '" + split + "' count does not match manifest");
  if (rec.patch_source.size() != rec.count)
    throw IoError("split '" + split + "' patch_source length mismatch");
  std::size_t fds = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].rows != manifest.patch_rows || patches[i].cols != manifest.patch_cols)
      throw IoError("split '" + split + "' patch shape does not match manifest");
    const std::uint32_t src = rec.patch_source[i];
    if (src >= rec.sources.size())
      throw IoError("split '" + split + "' patch_source index out of range");
    patches[i].source_id = rec.sources[src];
    fds += patches[i].label == Label::FDS ? 1u : 0u;
  }
  if (fds != rec.n_fds || patches.size() - fds != rec.n_lds)
    throw IoError("split '" + split + "' label tally does not match manifest");
  return patches;
}

std::string hash_hex(std::span<const std::uint8_t> bytes) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xF];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace qus::data
