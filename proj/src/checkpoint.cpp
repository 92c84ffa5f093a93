#include "qus/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace qus::ckpt {

void save_model_file(const std::filesystem::path& path, const json& header,
                     std::span<const float> blob) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  const std::string h = header.dump();
  os.write("QUSM", 4);
  const auto len = static_cast<std::uint32_t>(h.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  os.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path.string());
}

LoadedModelFile load_model_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "QUSM", 4) != 0)
    throw IoError("not a model checkpoint: " + path.string());
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  if (!is) throw IoError("truncated checkpoint header: " + path.string());
  std::string h(len, '\0');
  is.read(h.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("truncated checkpoint header: " + path.string());
  LoadedModelFile out;
  try {
    out.header = json::parse(h);
  } catch (const std::exception& e) {
    throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  // Rest of the file is the float32 blob.
  std::vector<char> rest((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(float) != 0)
    throw IoError("checkpoint blob is not float32-aligned: " + path.string());
  out.blob.resize(rest.size() / sizeof(float));
  std::memcpy(out.blob.data(), rest.data(), rest.size());
  return out;
}

}  // namespace qus::ckpt
