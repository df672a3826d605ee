#include "io.hpp"

#include <cstring>
#include <fstream>

#include "errors.hpp"
#include "tensor.hpp"

namespace cn::io {

namespace {
constexpr char kMagic[8] = {'C', 'N', 'C', 'K', 'P', 'T', '1', '\0'};

template <class T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw RuntimeError("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open " + path);
  f.write(kMagic, 8);
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t.name.size()));
    f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint8_t>(f, t.f32 ? 0 : 1);
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::int32_t>(f, d);
    if (t.data.size() != ad::shape_numel(t.shape))
      throw RuntimeError("checkpoint: shape/data mismatch for " + t.name);
    if (t.f32) {
      for (double v : t.data) write_pod<float>(f, static_cast<float>(v));
    } else {
      for (double v : t.data) write_pod<double>(f, v);
    }
  }
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw RuntimeError("checkpoint: bad magic in " + path);
  const auto count = read_pod<std::uint32_t>(f);
  std::vector<NamedTensor> out(count);
  for (NamedTensor& t : out) {
    const auto nlen = read_pod<std::uint32_t>(f);
    t.name.resize(nlen);
    f.read(t.name.data(), nlen);
    t.f32 = read_pod<std::uint8_t>(f) == 0;
    const auto rank = read_pod<std::uint32_t>(f);
    t.shape.resize(rank);
    for (auto& d : t.shape) d = read_pod<std::int32_t>(f);
    t.data.resize(ad::shape_numel(t.shape));
    for (double& v : t.data)
      v = t.f32 ? static_cast<double>(read_pod<float>(f)) : read_pod<double>(f);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cn::io
