#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshloc/error.hpp"

namespace meshloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Points closer to the camera than this (camera-frame z, meters) do not project.
inline constexpr double kNearPlane = 1e-4;

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Rotation matrix for a rotation of `angle_rad` about `axis`.
inline Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

// Rodrigues' formula for a rotation vector.
inline Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

// Camera pose with world-to-camera rotation R and camera center c in world
// coordinates. A world point x maps to camera coordinates R * (x - c).
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& c) : rotation(r), center(c) {}

  Vec3 to_camera(const Vec3& world) const { return rotation * (world - center); }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * cam + center; }

  // Viewing direction in world coordinates.
  Vec3 optical_axis() const { return rotation.row(2).transpose(); }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 should_be_identity = rotation * rotation.transpose();
    if (!((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol)) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol && center.allFinite();
  }
};

// Projective form x_cam = R * x + t used by pose files.
struct ProjectivePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

inline ProjectivePose pose_to_projective(const Pose& pose) {
  return {pose.rotation, -(pose.rotation * pose.center)};
}

inline Pose pose_from_projective(const Mat3& rotation, const Vec3& translation) {
  return {rotation, -(rotation.transpose() * translation)};
}

inline Pose pose_from_projective(const ProjectivePose& p) {
  return pose_from_projective(p.rotation, p.translation);
}

// Pinhole camera with optional radial distortion (k1, k2). Pixel centers sit
// at integer + 0.5, i.e. pixel (i, j) covers [i, i+1) x [j, j+1).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  std::vector<double> distortion;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw Error("camera image size must be at least 1x1");
    if (distortion.size() > 2) throw Error("at most two radial distortion coefficients are supported");
  }

  double k1() const { return distortion.empty() ? 0.0 : distortion[0]; }
  double k2() const { return distortion.size() < 2 ? 0.0 : distortion[1]; }
  bool has_distortion() const {
    return std::any_of(distortion.begin(), distortion.end(), [](double k) { return k != 0.0; });
  }

  // Pinhole copy without distortion.
  CameraIntrinsics undistorted() const {
    CameraIntrinsics k = *this;
    k.distortion.clear();
    return k;
  }

  // Unit-norm viewing ray in camera coordinates for an undistorted pixel.
  Vec3 bearing(const Vec2& px) const {
    return Vec3((px.x() - cx) / fx, (px.y() - cy) / fy, 1.0).normalized();
  }
};

inline std::optional<Vec2> project_camera(const CameraIntrinsics& k, const Vec3& cam) {
  if (!(cam.z() > kNearPlane)) return std::nullopt;
  return Vec2(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
}

// Undistorted pixel coordinates of a world point, or nullopt when the point
// lies at or behind the near plane.
inline std::optional<Vec2> project(const Pose& pose, const CameraIntrinsics& k, const Vec3& x) {
  return project_camera(k, pose.to_camera(x));
}

// World point seen at undistorted pixel `px` with camera-frame depth `depth`.
inline Vec3 unproject(const Pose& pose, const CameraIntrinsics& k, const Vec2& px, double depth) {
  if (!(depth > 0.0)) throw Error("unproject: depth must be positive");
  const Vec3 cam((px.x() - k.cx) / k.fx * depth, (px.y() - k.cy) / k.fy * depth, depth);
  return pose.to_world(cam);
}

// Applies the radial model x_d = x_u * (1 + k1 r^2 + k2 r^4) in normalized
// coordinates.
inline std::vector<Vec2> distort_points(const CameraIntrinsics& k, std::span<const Vec2> pts) {
  std::vector<Vec2> out(pts.begin(), pts.end());
  if (!k.has_distortion()) return out;
  for (Vec2& p : out) {
    const Vec2 n((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy);
    const double r2 = n.squaredNorm();
    const Vec2 d = n * (1.0 + k.k1() * r2 + k.k2() * r2 * r2);
    p = Vec2(d.x() * k.fx + k.cx, d.y() * k.fy + k.cy);
  }
  return out;
}

// Inverts the radial model by fixed-point iteration. Throws when a point does
// not converge to 1e-10 (normalized units) within 100 iterations.
inline std::vector<Vec2> undistort_points(const CameraIntrinsics& k, std::span<const Vec2> pts) {
  std::vector<Vec2> out(pts.begin(), pts.end());
  if (!k.has_distortion()) return out;
  constexpr int kMaxIterations = 100;
  constexpr double kConvergence = 1e-10;
  for (Vec2& p : out) {
    const Vec2 d((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy);
    Vec2 u = d;
    double step = 0.0;
    int it = 0;
    for (; it < kMaxIterations; ++it) {
      const double r2 = u.squaredNorm();
      const double factor = 1.0 + k.k1() * r2 + k.k2() * r2 * r2;
      const Vec2 next = d / factor;
      step = (next - u).norm();
      u = next;
      if (!std::isfinite(step)) break;
      // Iterate to full precision; only the 1e-10 bound is a hard requirement.
      if (step <= 1e-15 * (1.0 + u.norm())) break;
    }
    if (!std::isfinite(step) || step > kConvergence)
      throw Error("undistort_points: fixed-point iteration did not converge");
    p = Vec2(u.x() * k.fx + k.cx, u.y() * k.fy + k.cy);
  }
  return out;
}

struct PoseError {
  double position_m = 0.0;
  double rotation_deg = 0.0;
};

inline PoseError pose_error(const Pose& est, const Pose& gt) {
  // trace(R_gt * R_est^T) written as an elementwise sum so it is symmetric.
  const double trace = (gt.rotation.array() * est.rotation.array()).sum();
  const double cos_angle = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  return {(est.center - gt.center).norm(), rad_to_deg(std::acos(cos_angle))};
}

// Angle in radians between two rotations, accurate for small angles.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
  const double chord = (a - b).norm() / (2.0 * std::numbers::sqrt2);
  return 2.0 * std::asin(std::min(1.0, chord));
}

// Hamilton quaternion (w, x, y, z) conversions, normalized on input.
inline Mat3 rotation_from_quaternion(double qw, double qx, double qy, double qz) {
  return Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
}

inline Eigen::Vector4d quaternion_from_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace meshloc
