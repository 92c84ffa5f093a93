#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "qus/nn/tensor.hpp"

namespace qus::ckpt {

using json = nlohmann::ordered_json;

// QUSM model checkpoint (little-endian):
//   bytes 0..3  magic "QUSM"
//   u32         header length in bytes
//   header      UTF-8 JSON (model identity, config, parameter manifest)
//   blob        float32 parameters in manifest order (may be empty)

void save_model_file(const std::filesystem::path& path, const json& header,
                     std::span<const float> blob);

struct LoadedModelFile {
  json header;
  std::vector<float> blob;
};

LoadedModelFile load_model_file(const std::filesystem::path& path);

/// Parameter manifest (name + shape per tensor, params then buffers) used to
/// validate a blob before loading it.
template <class Model>
json param_manifest(Model& m) {
  json arr = json::array();
  auto add_all = [&](auto refs) {
    for (auto& p : refs) {
      json e;
      e["name"] = p.name;
      e["shape"] = p.value->shape;
      arr.push_back(e);
    }
  };
  add_all(m.params());
  add_all(m.buffers());
  return arr;
}

template <class Model>
std::vector<float> flatten(Model& m) {
  std::vector<float> blob;
  auto push = [&](auto& refs) {
    for (auto& p : refs)
      for (auto v : p.value->data) blob.push_back(static_cast<float>(v));
  };
  auto params = m.params();
  auto buffers = m.buffers();
  push(params);
  push(buffers);
  return blob;
}

template <class Model>
void unflatten(Model& m, std::span<const float> blob) {
  std::size_t off = 0;
  auto pull = [&](auto& refs) {
    for (auto& p : refs) {
      if (off + p.value->numel() > blob.size())
        throw IoError("checkpoint blob too short for parameter " + p.name);
      for (auto& v : p.value->data)
        v = static_cast<std::remove_reference_t<decltype(v)>>(blob[off++]);
    }
  };
  auto params = m.params();
  auto buffers = m.buffers();
  pull(params);
  pull(buffers);
  if (off != blob.size()) throw IoError("checkpoint blob has trailing values");
}

template <class Model>
void validate_manifest(Model& m, const json& manifest) {
  auto expected = param_manifest(m);
  if (manifest != expected)
    throw IoError("checkpoint parameter manifest does not match the model architecture");
}

}  // namespace qus::ckpt
