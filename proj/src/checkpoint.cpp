// SPDX-License-Identifier: Apache-2.0
#include "kinediff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "kinediff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "KD3D serialization assumes a little-endian host");

namespace kinediff {

namespace {

constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("KD3D: truncated file");
  return v;
}

}  // namespace

void save_kd3d(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("KD3D: cannot open for write: " + path);
  os.write("KD3D", 4);
  put<std::uint16_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("KD3D: write failed: " + path);
}

NamedTensors load_kd3d(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("KD3D: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "KD3D", 4) != 0)
    throw IoError("KD3D: bad magic in " + path);
  const auto version = get<std::uint16_t>(is);
  if (version != kVersion)
    throw IoError("KD3D: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = get<std::uint32_t>(is);
    std::vector<std::int64_t> shape(rank);
    std::int64_t n = 1;
    for (auto& d : shape) {
      d = get<std::uint32_t>(is);
      n *= d;
    }
    std::vector<double> data(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("KD3D: truncated tensor data in " + path);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

const Tensor* kd3d_find(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& kd3d_get(const NamedTensors& ts, const std::string& name) {
  const Tensor* t = kd3d_find(ts, name);
  if (!t) throw IoError("KD3D: missing tensor \"" + name + "\"");
  return *t;
}

}  // namespace kinediff
