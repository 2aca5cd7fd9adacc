#pragma once

// Position averaging: the camera center is replaced by the inlier-weighted
// mean of a regular grid of centers around it, with the rotation held fixed.

#include <cmath>
#include <span>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/ransac.hpp"

namespace meshloc {

struct AveragingConfig {
  double d_vol = 1.0;    // half side length of the sampled cube, meters
  double d_step = 0.25;  // grid spacing, meters

  void validate() const {
    if (!(d_step > 0.0) || !(d_step <= 2.0 * d_vol))
      throw Error("position averaging needs 0 < d_step <= 2 * d_vol");
  }

  static AveragingConfig aachen() { return {1.0, 0.25}; }
  static AveragingConfig twelve_scenes() { return {0.25, 0.05}; }
};

// Grid offsets are (a, b, d) * d_step for integers with |a * d_step| <= d_vol
// (boundary included). Each grid center c_i is weighted by the number of
// matches within inlier_px under (R, c_i). Returns the input pose when no
// grid center has any inlier.
inline Pose position_average(const Pose& pose, std::span<const Match2D3D> matches, const CameraIntrinsics& k,
                             double inlier_px, const AveragingConfig& avg) {
  avg.validate();
  const int steps = static_cast<int>(std::floor(avg.d_vol / avg.d_step + 1e-9));
  const double t2 = inlier_px * inlier_px;

  // Camera-frame points relative to the current center; moving the center by
  // o shifts every camera-frame point by -R o.
  std::vector<Vec3> cam(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) cam[i] = pose.to_camera(matches[i].world_pt);

  // Integer grid coordinates keep the weighted sums exact.
  Vec3 weighted = Vec3::Zero();
  double total = 0.0;
  for (int a = -steps; a <= steps; ++a) {
    for (int b = -steps; b <= steps; ++b) {
      for (int d = -steps; d <= steps; ++d) {
        const Vec3 grid(a, b, d);
        const Vec3 shift = pose.rotation * (grid * avg.d_step);
        std::size_t count = 0;
        for (std::size_t i = 0; i < cam.size(); ++i) {
          const Vec3 p = cam[i] - shift;
          if (!(p.z() > kNearPlane)) continue;
          const double du = k.fx * p.x() / p.z() + k.cx - matches[i].query_pt.x();
          const double dv = k.fy * p.y() / p.z() + k.cy - matches[i].query_pt.y();
          if (du * du + dv * dv <= t2) ++count;
        }
        weighted += static_cast<double>(count) * grid;
        total += static_cast<double>(count);
      }
    }
  }
  if (total == 0.0) return pose;
  return {pose.rotation, pose.center + (weighted / total) * avg.d_step};
}

}  // namespace meshloc
