#pragma once

// On-disk formats for depth maps (DMAP) and RGB renderings (binary PPM).
//
// DMAP layout, all little-endian:
//   char[4] "DMAP" | u32 width | u32 height | f32 scale (1.0) | f32 values[width*height]
// Values are row-major camera-frame depths in meters times scale; 0 marks invalid.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "meshloc/error.hpp"
#include "meshloc/mesh.hpp"

namespace meshloc {

namespace io_detail {

template <typename T>
void put_le(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const std::string& buf, std::size_t offset) {
  if (offset + sizeof(T) > buf.size()) throw ParseError("truncated depth map", offset);
  char bytes[sizeof(T)];
  std::memcpy(bytes, buf.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace io_detail

inline std::string encode_depth_map(const DepthMap& dm) {
  std::string buf;
  buf.reserve(16 + dm.values.size() * 4);
  buf.append("DMAP", 4);
  io_detail::put_le(buf, static_cast<std::uint32_t>(dm.width));
  io_detail::put_le(buf, static_cast<std::uint32_t>(dm.height));
  io_detail::put_le(buf, 1.0f);
  for (float v : dm.values) io_detail::put_le(buf, v);
  return buf;
}

inline DepthMap decode_depth_map(const std::string& buf) {
  if (buf.size() < 16 || buf.compare(0, 4, "DMAP") != 0) throw ParseError("missing DMAP magic", 0);
  const auto w = io_detail::get_le<std::uint32_t>(buf, 4);
  const auto h = io_detail::get_le<std::uint32_t>(buf, 8);
  const auto scale = io_detail::get_le<float>(buf, 12);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw ParseError("bad depth map size", 4);
  if (!(scale > 0.0f)) throw ParseError("bad depth map scale", 12);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (buf.size() != 16 + n * 4) throw ParseError("depth map payload size mismatch", buf.size());
  DepthMap dm(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) {
    const float v = io_detail::get_le<float>(buf, 16 + 4 * i);
    dm.values[i] = v > 0.0f ? v / scale : 0.0f;
  }
  return dm;
}

inline void save_depth_map(const std::filesystem::path& path, const DepthMap& dm) {
  io_detail::write_file(path, encode_depth_map(dm));
}

inline DepthMap load_depth_map(const std::filesystem::path& path) {
  try {
    return decode_depth_map(io_detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

inline std::string encode_ppm(const RgbImage& img) {
  std::string buf = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  buf.reserve(buf.size() + img.pixels.size() * 3);
  for (const Rgb& p : img.pixels)
    for (int c = 0; c < 3; ++c)
      buf.push_back(static_cast<char>(std::lround(std::clamp(p[c], 0.0f, 1.0f) * 255.0f)));
  return buf;
}

inline void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
  io_detail::write_file(path, encode_ppm(img));
}

}  // namespace meshloc
