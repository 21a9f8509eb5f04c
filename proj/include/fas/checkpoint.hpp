#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fas/vit.hpp"

namespace fas {

/// Named tensor sections plus a versioned key=value header.
///
/// File layout (little-endian): "FASCKPT1", u64 header byte length, header
/// text ("key=value\n" lines), u64 section count, then per section a u64 name
/// length, the name bytes and one tensor blob (see write_tensor).
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::map<std::string, std::string> header;
  std::vector<NamedTensor> sections;

  const Tensor* find(const std::string& name) const;
  void add(const std::string& prefix, const std::vector<NamedTensor>& tensors);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void put_config(Checkpoint& checkpoint, const ViTConfig& config);
ViTConfig config_from_header(const Checkpoint& checkpoint);

/// Copies `prefix + name` sections into the tensors of `target`. Every
/// missing section or shape disagreement is collected into one ShapeError
/// listing expected and found shapes. With skip_head the classification head
/// is left untouched.
void load_into(const Checkpoint& checkpoint, const std::string& prefix, const ViTParams& target,
               bool skip_head = false);

}  // namespace fas
