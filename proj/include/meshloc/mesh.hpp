#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"

namespace meshloc {

using Triangle = std::array<std::uint32_t, 3>;
using Rgb = Eigen::Vector3f;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Rgb> vertex_colors;  // empty or one per vertex, in [0,1]
  std::vector<float> vertex_ao;    // empty or one per vertex, in [0,1]

  bool has_colors() const { return !vertex_colors.empty(); }
  bool has_ao() const { return !vertex_ao.empty(); }
  bool empty() const { return triangles.empty(); }

  void validate() const {
    const auto n = vertices.size();
    for (const Triangle& t : triangles)
      for (std::uint32_t idx : t)
        if (idx >= n) throw Error("triangle index " + std::to_string(idx) + " out of range");
    if (has_colors() && vertex_colors.size() != n)
      throw Error("vertex_colors length does not match vertex count");
    if (has_ao() && vertex_ao.size() != n) throw Error("vertex_ao length does not match vertex count");
  }
};

// Per-pixel camera-frame depth, row-major. 0.0 marks pixels without surface.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return at(x, y) > 0.0f; }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, Rgb::Zero()) {}

  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

enum class RenderStyle { DepthOnly, Colored, Tricolor, AmbientOcclusion };

inline std::string_view to_string(RenderStyle s) {
  switch (s) {
    case RenderStyle::DepthOnly: return "depth";
    case RenderStyle::Colored: return "colored";
    case RenderStyle::Tricolor: return "tricolor";
    case RenderStyle::AmbientOcclusion: return "ao";
  }
  return "?";
}

inline RenderStyle render_style_from_string(std::string_view s) {
  if (s == "depth" || s == "depthonly") return RenderStyle::DepthOnly;
  if (s == "colored" || s == "color") return RenderStyle::Colored;
  if (s == "tricolor") return RenderStyle::Tricolor;
  if (s == "ao" || s == "ambient_occlusion") return RenderStyle::AmbientOcclusion;
  throw Error("unknown render style '" + std::string(s) + "'");
}

// Depth at the pixel containing `p`; nullopt outside the image or on the
// invalid marker. Depths are never interpolated across pixels.
inline std::optional<double> lookup_depth(const DepthMap& dm, const Vec2& p) {
  if (!(p.x() >= 0.0) || !(p.y() >= 0.0)) return std::nullopt;
  const double fx = std::floor(p.x());
  const double fy = std::floor(p.y());
  if (fx >= dm.width || fy >= dm.height) return std::nullopt;
  const float d = dm.at(static_cast<int>(fx), static_cast<int>(fy));
  if (!(d > 0.0f)) return std::nullopt;
  return static_cast<double>(d);
}

}  // namespace meshloc
