#pragma once

#include "mushroom/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mushroom {

struct NamedArray {
  std::string name;
  DType dtype = DType::F64;
  Shape shape;
  std::vector<double> values;
};

/// Named arrays plus a free-form JSON metadata string. The byte layout is
/// documented in docs/checkpoint_format.md.
struct Checkpoint {
  std::string metadata_json = "{}";
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace mushroom
