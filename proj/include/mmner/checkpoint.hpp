#pragma once

// Checkpoint file: "MNER", u32 version = 1, u32 tensor count, then per
// tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims..., float32
// payload; little-endian throughout.
//
// Vocabularies, labels and dimensions are not tensors; they live in a JSON
// sidecar at "<checkpoint>.json".

#include <filesystem>
#include <string>
#include <vector>

#include "mmner/model.hpp"

namespace mmner {

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

std::string encode_tensors(const std::vector<NamedArray>& tensors);
std::vector<NamedArray> decode_tensors(std::string_view bytes, const std::string& source);

void save_checkpoint(const std::filesystem::path& path, ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace mmner
