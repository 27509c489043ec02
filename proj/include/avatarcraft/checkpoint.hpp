#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avatarcraft/nn.hpp"

namespace avatarcraft::checkpoint {

// Single-file container:
//   8 bytes  magic "AVCKPT01"
//   8 bytes  little-endian u64 header length
//   header   UTF-8 JSON: {"meta": {...}, "tensors": [{"name","dtype","shape","offset","nbytes"}]}
//   payload  raw little-endian tensor bytes, concatenated in table order
// Offsets are relative to the start of the payload.

struct Tensor {
  std::string name;
  std::string dtype = "f32";
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Archive {
  nlohmann::json meta;
  std::vector<Tensor> tensors;

  const Tensor& find(const std::string& name) const;
};

void save(const std::filesystem::path& path, const Archive& archive);
Archive load(const std::filesystem::path& path);

/// Appends every parameter of store, prefixed, to archive.
void export_params(const nn::ParamStore& store, const std::string& prefix, Archive& archive);
/// Copies tensors named prefix + param.name into store; shapes must match.
void import_params(const Archive& archive, const std::string& prefix, nn::ParamStore& store);

}  // namespace avatarcraft::checkpoint
