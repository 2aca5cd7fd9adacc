#pragma once

// PLY mesh reading and writing (ASCII, binary little- and big-endian).

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/mesh.hpp"

namespace meshloc {

namespace ply_detail {

enum class Format { Ascii, BinaryLittleEndian, BinaryBigEndian };

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<Scalar> parse_scalar(std::string_view s) {
  if (s == "char" || s == "int8") return Scalar::Int8;
  if (s == "uchar" || s == "uint8") return Scalar::UInt8;
  if (s == "short" || s == "int16") return Scalar::Int16;
  if (s == "ushort" || s == "uint16") return Scalar::UInt16;
  if (s == "int" || s == "int32") return Scalar::Int32;
  if (s == "uint" || s == "uint32") return Scalar::UInt32;
  if (s == "float" || s == "float32") return Scalar::Float32;
  if (s == "double" || s == "float64") return Scalar::Float64;
  return std::nullopt;
}

struct Property {
  std::string name;
  Scalar type = Scalar::Float32;
  bool is_list = false;
  Scalar count_type = Scalar::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;

  int find(std::string_view prop) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == prop) return static_cast<int>(i);
    return -1;
  }
};

// Sequential reader over the payload that reports byte offsets on failure.
class Reader {
 public:
  Reader(std::string_view data, std::size_t pos, Format fmt) : data_(data), pos_(pos), fmt_(fmt) {}

  std::size_t offset() const { return pos_; }

  double read(Scalar type) { return fmt_ == Format::Ascii ? read_ascii() : read_binary(type); }

  void skip_line() {
    while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
    if (pos_ < data_.size()) ++pos_;
  }

 private:
  double read_ascii() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (pos_ >= data_.size()) throw ParseError("truncated PLY payload", pos_);
    std::size_t end = pos_;
    while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(data_.data() + pos_, data_.data() + end, value);
    if (ec != std::errc() || ptr != data_.data() + end)
      throw ParseError("malformed number '" + std::string(data_.substr(pos_, end - pos_)) + "'", pos_);
    pos_ = end;
    return value;
  }

  template <typename T>
  T take() {
    if (pos_ + sizeof(T) > data_.size()) throw ParseError("truncated PLY payload", pos_);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    const bool file_little = fmt_ == Format::BinaryLittleEndian;
    if (file_little != (std::endian::native == std::endian::little))
      std::reverse(std::begin(bytes), std::end(bytes));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  double read_binary(Scalar type) {
    switch (type) {
      case Scalar::Int8: return take<std::int8_t>();
      case Scalar::UInt8: return take<std::uint8_t>();
      case Scalar::Int16: return take<std::int16_t>();
      case Scalar::UInt16: return take<std::uint16_t>();
      case Scalar::Int32: return take<std::int32_t>();
      case Scalar::UInt32: return take<std::uint32_t>();
      case Scalar::Float32: return take<float>();
      case Scalar::Float64: return take<double>();
    }
    return 0.0;
  }

  std::string_view data_;
  std::size_t pos_;
  Format fmt_;
};

}  // namespace ply_detail

// Parses a PLY mesh held in memory. Polygons are fan-triangulated. Vertex
// colors come from red/green/blue (uchar scaled by 1/255, floats as-is) and
// ambient occlusion from a float "ao" or "quality" property.
inline TriangleMesh parse_ply(std::string_view data) {
  using namespace ply_detail;

  std::size_t pos = 0;
  auto next_line = [&](std::size_t& line_start) -> std::string_view {
    if (pos >= data.size()) throw ParseError("unexpected end of PLY header", pos);
    line_start = pos;
    const std::size_t end = data.find('\n', pos);
    if (end == std::string_view::npos) throw ParseError("unterminated PLY header", pos);
    std::string_view line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    return line;
  };

  std::size_t line_start = 0;
  if (next_line(line_start) != "ply") throw ParseError("missing 'ply' magic", 0);

  std::optional<Format> format;
  std::vector<Element> elements;
  for (;;) {
    const std::string_view line = next_line(line_start);
    std::istringstream in{std::string(line)};
    std::string keyword;
    in >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string name, version;
      in >> name >> version;
      if (name == "ascii") format = Format::Ascii;
      else if (name == "binary_little_endian") format = Format::BinaryLittleEndian;
      else if (name == "binary_big_endian") format = Format::BinaryBigEndian;
      else throw ParseError("unknown PLY format '" + name + "'", line_start);
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      in >> e.name >> count;
      if (e.name.empty() || !in || count < 0) throw ParseError("malformed element line", line_start);
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) throw ParseError("property before any element", line_start);
      std::string type;
      in >> type;
      Property p;
      if (type == "list") {
        std::string count_type, item_type;
        in >> count_type >> item_type >> p.name;
        const auto ct = parse_scalar(count_type);
        const auto it = parse_scalar(item_type);
        if (!ct || !it || p.name.empty()) throw ParseError("malformed list property", line_start);
        p.is_list = true;
        p.count_type = *ct;
        p.type = *it;
      } else {
        in >> p.name;
        const auto t = parse_scalar(type);
        if (!t || p.name.empty()) throw ParseError("malformed property '" + type + "'", line_start);
        p.type = *t;
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError("unknown PLY header keyword '" + keyword + "'", line_start);
    }
  }
  if (!format) throw ParseError("PLY header lacks a format line", 0);

  TriangleMesh mesh;
  Reader reader(data, pos, *format);
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      const int ix = e.find("x"), iy = e.find("y"), iz = e.find("z");
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z", pos);
      const int ir = e.find("red"), ig = e.find("green"), ib = e.find("blue");
      const bool colors = ir >= 0 && ig >= 0 && ib >= 0;
      int iao = e.find("ao");
      if (iao < 0) iao = e.find("quality");
      mesh.vertices.resize(e.count);
      if (colors) mesh.vertex_colors.resize(e.count);
      if (iao >= 0) mesh.vertex_ao.resize(e.count);
      std::vector<double> values(e.properties.size());
      for (std::size_t v = 0; v < e.count; ++v) {
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          const Property& prop = e.properties[p];
          if (prop.is_list) {
            const auto n = static_cast<long long>(reader.read(prop.count_type));
            for (long long k = 0; k < n; ++k) reader.read(prop.type);
            values[p] = 0.0;
          } else {
            values[p] = reader.read(prop.type);
          }
        }
        if (*format == Format::Ascii) reader.skip_line();
        mesh.vertices[v] = Vec3(values[ix], values[iy], values[iz]);
        if (colors) {
          auto channel = [&](int idx) {
            const double raw = values[idx];
            const bool integral = e.properties[idx].type == Scalar::UInt8;
            return static_cast<float>(integral ? raw / 255.0 : raw);
          };
          mesh.vertex_colors[v] = Rgb(channel(ir), channel(ig), channel(ib));
        }
        if (iao >= 0) mesh.vertex_ao[v] = static_cast<float>(values[iao]);
      }
    } else if (e.name == "face") {
      int ilist = e.find("vertex_indices");
      if (ilist < 0) ilist = e.find("vertex_index");
      if (ilist < 0 || !e.properties[ilist].is_list)
        throw ParseError("face element lacks a vertex_indices list", pos);
      std::vector<std::uint32_t> poly;
      for (std::size_t f = 0; f < e.count; ++f) {
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          const Property& prop = e.properties[p];
          if (!prop.is_list) {
            reader.read(prop.type);
            continue;
          }
          const std::size_t count_offset = reader.offset();
          const double n_raw = reader.read(prop.count_type);
          if (n_raw < 0) throw ParseError("negative list length", count_offset);
          const auto n = static_cast<std::size_t>(n_raw);
          if (static_cast<int>(p) != ilist) {
            for (std::size_t k = 0; k < n; ++k) reader.read(prop.type);
            continue;
          }
          poly.clear();
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx_offset = reader.offset();
            const double idx = reader.read(prop.type);
            if (idx < 0 || idx >= static_cast<double>(mesh.vertices.size()))
              throw ParseError("face index " + std::to_string(static_cast<long long>(idx)) +
                                   " out of range for " + std::to_string(mesh.vertices.size()) + " vertices",
                               idx_offset);
            poly.push_back(static_cast<std::uint32_t>(idx));
          }
          for (std::size_t k = 1; k + 1 < poly.size(); ++k)
            mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
        }
        if (*format == Format::Ascii) reader.skip_line();
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const Property& prop : e.properties) {
          if (prop.is_list) {
            const auto n = static_cast<long long>(reader.read(prop.count_type));
            for (long long k = 0; k < n; ++k) reader.read(prop.type);
          } else {
            reader.read(prop.type);
          }
        }
        if (*format == Format::Ascii) reader.skip_line();
      }
    }
  }
  return mesh;
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open mesh file " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_ply(data);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

// Writes a binary little-endian PLY. Positions as double, colors as uchar,
// ambient occlusion as float "ao".
inline void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write mesh file " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (mesh.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (mesh.has_ao()) out << "property float ao\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";

  auto put = [&out](auto value) {
    char bytes[sizeof(value)];
    std::memcpy(bytes, &value, sizeof(value));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    out.write(bytes, sizeof(value));
  };
  auto to_u8 = [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    put(mesh.vertices[i].x());
    put(mesh.vertices[i].y());
    put(mesh.vertices[i].z());
    if (mesh.has_colors())
      for (int c = 0; c < 3; ++c) put(to_u8(mesh.vertex_colors[i][c]));
    if (mesh.has_ao()) put(mesh.vertex_ao[i]);
  }
  for (const Triangle& t : mesh.triangles) {
    put(std::uint8_t{3});
    for (std::uint32_t idx : t) put(static_cast<std::int32_t>(idx));
  }
  if (!out) throw Error("failed writing mesh file " + path.string());
}

}  // namespace meshloc
