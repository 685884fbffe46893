// SPDX-License-Identifier: Apache-2.0
//
// Fixed little-endian primitives for the binary file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "patchfuse/errors.hpp"

namespace patchfuse::binio {

template <typename U>
void put_uint(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_uint(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("unexpected end of binary stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double v) { put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_uint<std::uint64_t>(in)); }
inline void put_f32(std::ostream& out, float v) { put_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_uint<std::uint32_t>(in)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1u << 28) {
  const auto n = get_uint<std::uint32_t>(in);
  if (n > max_len) throw IoError("binary string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("unexpected end of binary stream");
  return s;
}

inline void expect_magic(std::istream& in, const char* magic, std::size_t len, const std::string& what) {
  std::string got(len, '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(len)) || std::memcmp(got.data(), magic, len) != 0) {
    throw IoError("not a " + what + " file (bad magic)");
  }
}

}  // namespace patchfuse::binio
