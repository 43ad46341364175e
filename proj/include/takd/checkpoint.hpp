// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format:
//   "TAKD" | version u32 | records...
//   record = name_len u32 | UTF-8 name | rank u32 | dims u32 x rank | f32 payload
// All integers and floats are little-endian. The first record carries the
// architecture descriptor in its name ("@arch:" prefix) with an empty payload.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "takd/tensor.hpp"

namespace takd {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kArchPrefix[] = "@arch:";

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::string architecture;
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  }
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(sizeof(U) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  os.write(reinterpret_cast<const char*>(&bits), 4);
}

template <typename U>
U get_le(std::istream& is, const std::string& what) {
  static_assert(sizeof(U) == 4);
  std::uint32_t bits;
  if (!is.read(reinterpret_cast<char*>(&bits), 4)) throw IoError("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  U v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_record(std::ostream& os, const std::string& name, const Shape& shape,
                         std::span<const float> payload) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  } else {
    for (float v : payload) put_le<float>(os, v);
  }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("TAKD", 4);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_record(os, kArchPrefix + ckpt.architecture, Shape{0}, {});
  for (const auto& t : ckpt.tensors) detail::write_record(os, t.name, t.value.shape(), t.value.data());
  if (!os) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TAKD", 4) != 0)
    throw IoError(path.string() + " is not a TAKD checkpoint");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  bool first = true;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = detail::get_le<std::uint32_t>(is, "name length");
    if (len > (1u << 20)) throw IoError("implausible record name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("checkpoint truncated in record name");
    const auto rank = detail::get_le<std::uint32_t>(is, "rank");
    if (rank > 8) throw IoError("implausible rank in record " + name);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint32_t>(is, "dims");
    const std::size_t n = numel_of(shape);
    std::vector<float> payload(n);
    if constexpr (std::endian::native == std::endian::little) {
      if (n > 0 && !is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * 4)))
        throw IoError("checkpoint payload truncated in record " + name);
    } else {
      for (auto& v : payload) v = detail::get_le<float>(is, "payload");
    }
    if (first && name.rfind(kArchPrefix, 0) == 0) {
      ckpt.architecture = name.substr(sizeof(kArchPrefix) - 1);
    } else {
      ckpt.tensors.push_back({name, Tensor<float>(std::move(shape), std::move(payload))});
    }
    first = false;
  }
  return ckpt;
}

}  // namespace takd
