#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

// Layout: "CHDR", u32 version, then until EOF one record per tensor:
//   u16 name length, name bytes, u8 rank, u32 extent x rank, f32 payload.
// All integers and floats little-endian.

inline constexpr char kCheckpointMagic[4] = {'C', 'H', 'D', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw DataError("checkpoint: truncated record");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw DataError("checkpoint: name too long: " + name.substr(0, 32) + "...");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (float v : t.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline NamedTensors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, kCheckpointMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  NamedTensors out;
  while (pos < bytes.size()) {
    const auto len = detail::get_le<std::uint16_t>(bytes, pos);
    if (pos + len > bytes.size()) throw DataError("checkpoint: truncated name");
    std::string name = bytes.substr(pos, len);
    pos += len;
    const auto rank = detail::get_le<std::uint8_t>(bytes, pos);
    if (rank > Tensor::kMaxRank) throw DataError("checkpoint: rank " + std::to_string(rank) + " for '" + name + "'");
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(detail::get_le<std::uint32_t>(bytes, pos));
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (pos + 4 * n > bytes.size()) throw DataError("checkpoint: truncated payload for '" + name + "'");
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path.string());
}

inline NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace vhdr
