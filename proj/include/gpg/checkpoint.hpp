#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpg/tensor.hpp"

namespace gpg {

// Layout (all integers little-endian):
//   "GPGN" | u32 version
//   repeated until EOF:
//     u32 name_len | name bytes | u32 rank | u64 extent * rank | f64 * product(extents)

inline constexpr char kCheckpointMagic[4] = {'G', 'P', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool get_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>)
    v = std::bit_cast<double>(bits);
  else
    v = static_cast<T>(bits);
  return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params) {
  out.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto* p : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.shape.size()));
    for (auto e : p->value.shape) detail::put_le<std::uint64_t>(out, e);
    for (double v : p->value.values) detail::put_le<double>(out, v);
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  std::uint32_t version = 0;
  if (!detail::get_le(in, version)) throw CheckpointError("truncated checkpoint header");
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  std::vector<NamedTensor> out;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!detail::get_le(in, name_len)) break;
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!in.read(name.data(), name_len) || !detail::get_le(in, rank))
      throw CheckpointError("truncated checkpoint record");
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint64_t x = 0;
      if (!detail::get_le(in, x)) throw CheckpointError("truncated extents for " + name);
      e = static_cast<std::size_t>(x);
    }
    std::vector<double> values(shape_size(shape));
    for (auto& v : values)
      if (!detail::get_le(in, v)) throw CheckpointError("truncated payload for " + name);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, std::span<const Parameter* const> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(out, params);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace gpg
