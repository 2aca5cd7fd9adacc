#pragma once

// Deterministic z-buffer software rasterizer for depth maps and stylized
// renderings of triangle meshes.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/mesh.hpp"

namespace meshloc {

// Per-pixel result of rasterization: nearest surface depth, the triangle that
// produced it and perspective-correct barycentric weights on that triangle's
// original vertices. triangle < 0 marks uncovered pixels.
struct RasterBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<std::int32_t> triangle;
  std::vector<Eigen::Vector3d> weights;

  RasterBuffer(int w, int h)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity()),
        triangle(static_cast<std::size_t>(w) * h, -1),
        weights(static_cast<std::size_t>(w) * h, Eigen::Vector3d::Zero()) {}

  bool covered(std::size_t i) const { return triangle[i] >= 0; }
};

namespace raster_detail {

struct ClipVertex {
  Vec3 cam;
  Eigen::Vector3d bary;
};

// Sutherland-Hodgman against z >= near. A triangle yields at most 4 vertices.
inline int clip_near(const std::array<ClipVertex, 3>& in, std::array<ClipVertex, 4>& out) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    const bool a_in = a.cam.z() >= kNearPlane;
    const bool b_in = b.cam.z() >= kNearPlane;
    if (a_in) out[n++] = a;
    if (a_in != b_in) {
      const double t = (kNearPlane - a.cam.z()) / (b.cam.z() - a.cam.z());
      ClipVertex v{a.cam + t * (b.cam - a.cam), a.bary + t * (b.bary - a.bary)};
      v.cam.z() = kNearPlane;
      out[n++] = v;
    }
  }
  return n;
}

inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// Tie rule for pixel centers exactly on an edge: of the two opposite
// traversal directions of a shared edge, exactly one owns it.
inline bool owns_edge(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  return d.y() > 0.0 || (d.y() == 0.0 && d.x() > 0.0);
}

inline void raster_triangle(RasterBuffer& buf, const CameraIntrinsics& k, std::int32_t tri_id,
                            std::array<ClipVertex, 3> v) {
  std::array<Vec2, 3> s;
  std::array<double, 3> inv_z;
  for (int i = 0; i < 3; ++i) {
    inv_z[i] = 1.0 / v[i].cam.z();
    s[i] = Vec2(k.fx * v[i].cam.x() * inv_z[i] + k.cx, k.fy * v[i].cam.y() * inv_z[i] + k.cy);
  }
  double area = edge(s[0], s[1], s[2]);
  if (!(std::abs(area) > 1e-14)) return;
  if (area < 0.0) {
    std::swap(s[1], s[2]);
    std::swap(inv_z[1], inv_z[2]);
    std::swap(v[1], v[2]);
    area = -area;
  }

  const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
  const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
  const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
  const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
  const int x0 = static_cast<int>(std::max(0.0, std::floor(min_x - 0.5)));
  const int x1 = static_cast<int>(std::min(buf.width - 1.0, std::ceil(max_x - 0.5)));
  const int y0 = static_cast<int>(std::max(0.0, std::floor(min_y - 0.5)));
  const int y1 = static_cast<int>(std::min(buf.height - 1.0, std::ceil(max_y - 0.5)));
  if (x0 > x1 || y0 > y1) return;

  const std::array<bool, 3> owns = {owns_edge(s[1], s[2]), owns_edge(s[2], s[0]), owns_edge(s[0], s[1])};
  const double inv_area = 1.0 / area;

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x + 0.5, y + 0.5);
      const std::array<double, 3> w = {edge(s[1], s[2], p), edge(s[2], s[0], p), edge(s[0], s[1], p)};
      bool inside = true;
      for (int i = 0; i < 3 && inside; ++i) inside = w[i] > 0.0 || (w[i] == 0.0 && owns[i]);
      if (!inside) continue;

      const double b0 = w[0] * inv_area, b1 = w[1] * inv_area, b2 = w[2] * inv_area;
      const double iz = b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2];
      const double z = 1.0 / iz;
      const std::size_t idx = static_cast<std::size_t>(y) * buf.width + x;
      if (!(z > kNearPlane) || !(z < buf.depth[idx])) continue;
      buf.depth[idx] = z;
      buf.triangle[idx] = tri_id;
      buf.weights[idx] =
          (b0 * inv_z[0] * v[0].bary + b1 * inv_z[1] * v[1].bary + b2 * inv_z[2] * v[2].bary) * z;
    }
  }
}

}  // namespace raster_detail

// Rasterizes every triangle (no back-face culling) with near-plane clipping
// and perspective-correct interpolation; pixel centers at integer + 0.5.
inline RasterBuffer rasterize(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k) {
  using namespace raster_detail;
  RasterBuffer buf(k.width, k.height);
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = pose.to_camera(mesh.vertices[i]);

  std::array<ClipVertex, 4> clipped;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    const std::array<ClipVertex, 3> in = {ClipVertex{cam[tri[0]], Eigen::Vector3d::UnitX()},
                                          ClipVertex{cam[tri[1]], Eigen::Vector3d::UnitY()},
                                          ClipVertex{cam[tri[2]], Eigen::Vector3d::UnitZ()}};
    if (in[0].cam.z() < kNearPlane && in[1].cam.z() < kNearPlane && in[2].cam.z() < kNearPlane) continue;
    const int n = clip_near(in, clipped);
    for (int i = 1; i + 1 < n; ++i)
      raster_triangle(buf, k, static_cast<std::int32_t>(t), {clipped[0], clipped[i], clipped[i + 1]});
  }
  return buf;
}

inline DepthMap depth_from_raster(const RasterBuffer& buf) {
  DepthMap dm(buf.width, buf.height);
  for (std::size_t i = 0; i < buf.depth.size(); ++i)
    if (buf.covered(i)) dm.values[i] = static_cast<float>(buf.depth[i]);
  return dm;
}

inline DepthMap render_depth(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k) {
  return depth_from_raster(rasterize(mesh, pose, k));
}

struct DirectionalLight {
  Vec3 direction;  // camera frame, unit length
  Rgb color;
  float weight = 1.0f;
};

// Three lights attached to the camera: a bluish one along the vertical axis
// and two yellowish ones in the horizontal plane at +112 and -129 degrees
// from the optical axis (positive angles turn toward +x).
inline std::array<DirectionalLight, 3> default_tricolor_lights() {
  auto horizontal = [](double deg) {
    const double a = deg_to_rad(deg);
    return Vec3(std::sin(a), 0.0, std::cos(a));
  };
  const Rgb blue(0.85f, 0.85f, 1.0f);
  const Rgb yellow(1.0f, 1.0f, 0.85f);
  return {DirectionalLight{Vec3::UnitY(), blue, 1.0f}, DirectionalLight{horizontal(112.0), yellow, 0.7f},
          DirectionalLight{horizontal(-129.0), yellow, 0.7f}};
}

// Double-sided Lambertian shading of a camera-frame unit normal.
inline Rgb shade_tricolor(const Vec3& normal_cam, const std::array<DirectionalLight, 3>& lights) {
  Rgb c = Rgb::Zero();
  for (const DirectionalLight& l : lights)
    c += l.weight * static_cast<float>(std::abs(normal_cam.dot(l.direction))) * l.color;
  return c.cwiseMax(0.0f).cwiseMin(1.0f);
}

inline RgbImage render_image(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k,
                             RenderStyle style,
                             const std::array<DirectionalLight, 3>& lights = default_tricolor_lights()) {
  if (style == RenderStyle::Colored && !mesh.has_colors())
    throw Error("render style 'colored' requires vertex_colors, which the mesh lacks");
  if (style == RenderStyle::AmbientOcclusion && !mesh.has_ao())
    throw Error("render style 'ao' requires vertex_ao, which the mesh lacks");

  const RasterBuffer buf = rasterize(mesh, pose, k);
  RgbImage img(buf.width, buf.height);

  std::vector<Rgb> face_shade;
  if (style == RenderStyle::Tricolor) {
    face_shade.resize(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const Triangle& tri = mesh.triangles[t];
      const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                         .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
      const double len = n.norm();
      face_shade[t] = len > 0.0 ? shade_tricolor(pose.rotation * (n / len), lights) : Rgb::Zero();
    }
  }

  double min_depth = std::numeric_limits<double>::infinity();
  if (style == RenderStyle::DepthOnly)
    for (std::size_t i = 0; i < buf.depth.size(); ++i)
      if (buf.covered(i)) min_depth = std::min(min_depth, buf.depth[i]);

  for (std::size_t i = 0; i < buf.depth.size(); ++i) {
    if (!buf.covered(i)) continue;
    const Triangle& tri = mesh.triangles[buf.triangle[i]];
    const Eigen::Vector3d& w = buf.weights[i];
    Rgb& out = img.pixels[i];
    switch (style) {
      case RenderStyle::Colored:
        out = static_cast<float>(w[0]) * mesh.vertex_colors[tri[0]] +
              static_cast<float>(w[1]) * mesh.vertex_colors[tri[1]] +
              static_cast<float>(w[2]) * mesh.vertex_colors[tri[2]];
        break;
      case RenderStyle::AmbientOcclusion: {
        const double ao = w[0] * mesh.vertex_ao[tri[0]] + w[1] * mesh.vertex_ao[tri[1]] +
                          w[2] * mesh.vertex_ao[tri[2]];
        out = Rgb::Constant(static_cast<float>(ao));
        break;
      }
      case RenderStyle::Tricolor: out = face_shade[buf.triangle[i]]; break;
      case RenderStyle::DepthOnly: out = Rgb::Constant(static_cast<float>(min_depth / buf.depth[i])); break;
    }
    out = out.cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return img;
}

}  // namespace meshloc
