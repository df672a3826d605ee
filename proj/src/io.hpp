#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cn::io {

// Flat binary checkpoint: magic "CNCKPT1\0", uint32 tensor count, then per
// tensor: name (u32 length + bytes), dtype byte (0 = f32, 1 = f64), rank
// (u32) + dims (i32 each), little-endian payload.
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;  // widened on load; narrowed on save if f32
  bool f32 = true;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// FNV-1a over a byte string; used for content-addressed run directories.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace cn::io
