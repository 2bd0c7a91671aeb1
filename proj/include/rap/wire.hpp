#pragma once
// Little-endian primitives shared by the binary file formats.  Values are
// written byte by byte so files read the same on either host endianness.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "rap/common.hpp"

namespace rap::wire {

inline void wr_u32(std::ostream& f, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t rd_u32(std::istream& f, const char* field) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw FormatError(std::string("truncated while reading ") + field);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

inline void wr_u64(std::ostream& f, uint64_t v) {
  wr_u32(f, uint32_t(v & 0xffffffffu));
  wr_u32(f, uint32_t(v >> 32));
}

inline uint64_t rd_u64(std::istream& f, const char* field) {
  uint64_t lo = rd_u32(f, field);
  uint64_t hi = rd_u32(f, field);
  return lo | hi << 32;
}

inline void wr_f32(std::ostream& f, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  wr_u32(f, u);
}

inline float rd_f32(std::istream& f, const char* field) {
  uint32_t u = rd_u32(f, field);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void expect_magic(std::istream& f, const char* magic, const std::string& path) {
  char got[4];
  f.read(got, 4);
  if (!f || std::memcmp(got, magic, 4) != 0)
    throw FormatError(path + ": bad magic, expected " + magic);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path);
  return f;
}

inline uint32_t checked_dim(int v, const char* field) {
  if (v <= 0) throw FormatError(std::string(field) + " must be positive");
  return uint32_t(v);
}

// CRC-32 (IEEE 802.3 polynomial, reflected), the common zip/png checksum.
inline uint32_t crc32_update(uint32_t crc, const void* data, size_t n) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const unsigned char* p = static_cast<const unsigned char*>(data);
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

}  // namespace rap::wire
