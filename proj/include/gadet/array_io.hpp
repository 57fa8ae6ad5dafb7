#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/image.hpp"

namespace gadet {

// Flat binary array container for preprocessed tensors and raw saliency maps.
// 16-byte little-endian header:
//   bytes 0..3   magic "GAT1"
//   bytes 4..5   dtype code (u16): 1 = float32, 2 = uint8
//   bytes 6..7   channels (u16)
//   bytes 8..11  height (u32)
//   bytes 12..15 width (u32)
// Payload follows in HWC row-major order.
namespace array_file {

inline constexpr char kMagic[4] = {'G', 'A', 'T', '1'};
inline constexpr std::uint16_t kDtypeF32 = 1;
inline constexpr std::uint16_t kDtypeU8 = 2;

namespace detail {

inline void put_u16(std::ofstream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}
inline void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}
inline std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_header(std::ofstream& out, std::uint16_t dtype, int h, int w,
                         int c) {
  out.write(kMagic, 4);
  put_u16(out, dtype);
  put_u16(out, static_cast<std::uint16_t>(c));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
}

struct Header {
  std::uint16_t dtype;
  int height, width, channels;
};

inline Header read_header(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad array-file magic: " + path);
  Header h;
  h.dtype = get_u16(in);
  h.channels = get_u16(in);
  h.height = static_cast<int>(get_u32(in));
  h.width = static_cast<int>(get_u32(in));
  if (h.dtype != kDtypeF32 && h.dtype != kDtypeU8)
    throw DataError("unknown array-file dtype: " + path);
  return h;
}

}  // namespace detail

inline void save(const FloatImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write array file: " + path);
  detail::write_header(out, kDtypeF32, img.height, img.width, img.channels);
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (!out) throw IoError("short write: " + path);
}

inline void save(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write array file: " + path);
  detail::write_header(out, kDtypeU8, img.height, img.width, img.channels);
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("short write: " + path);
}

// Loads either dtype, widening uint8 payloads to float.
inline FloatImage load_float(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open array file: " + path);
  const auto h = detail::read_header(in, path);
  FloatImage img(h.height, h.width, h.channels);
  if (h.dtype == kDtypeF32) {
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  } else {
    std::vector<std::uint8_t> raw(img.data.size());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i];
  }
  if (!in) throw DataError("truncated array file: " + path);
  return img;
}

}  // namespace array_file

}  // namespace gadet
