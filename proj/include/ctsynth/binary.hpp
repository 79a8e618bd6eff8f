#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace ctsynth {

/// Little-endian float32 payloads shared by .cvol and .ckpt files.
inline void write_f32le(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

/// Reads up to `count` values; a short read returns fewer.
inline std::vector<float> read_f32le(std::istream& in, std::size_t count) {
  std::vector<char> buf(count * 4);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  const std::size_t got = static_cast<std::size_t>(in.gcount()) / 4;
  std::vector<float> out(got);
  for (std::size_t i = 0; i < got; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace ctsynth
