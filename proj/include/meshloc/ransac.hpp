#pragma once

// LO-RANSAC absolute pose estimation with MSAC scoring and Cauchy-loss
// local optimization.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/lm.hpp"
#include "meshloc/p3p.hpp"

namespace meshloc {

struct RansacConfig {
  double inlier_px = 12.0;
  std::size_t min_iterations = 10000;
  std::size_t max_iterations = 100000;
  double confidence = 0.9999;
  std::uint64_t seed = 0;
  std::optional<double> cauchy_scale_px;  // defaults to inlier_px
  bool lo_refine_every_best = true;

  double cauchy_scale() const { return cauchy_scale_px.value_or(inlier_px); }

  void validate() const {
    if (!(inlier_px > 0.0)) throw Error("inlier threshold must be positive");
    if (min_iterations == 0 || min_iterations > max_iterations)
      throw Error("RANSAC iteration bounds must satisfy 0 < min <= max");
    if (!(confidence > 0.0 && confidence < 1.0)) throw Error("RANSAC confidence must lie in (0, 1)");
    if (!(cauchy_scale() > 0.0)) throw Error("Cauchy scale must be positive");
  }
};

// Named per-feature inlier thresholds in pixels.
namespace inlier_presets {
inline constexpr double kSuperGlue = 6.0;
inline constexpr double kLoFTR = 6.0;
inline constexpr double kPatch2PixSuperGlue = 12.0;
inline constexpr double kPatch2Pix = 20.0;
}  // namespace inlier_presets

struct LocalizationResult {
  Pose pose;
  std::vector<std::size_t> inliers;  // indices into the input matches
  double msac_score = 0.0;
  std::size_t component_id = 0;
  std::size_t num_iterations = 0;
};

inline double reprojection_error(const Pose& pose, const CameraIntrinsics& k, const Match2D3D& m) {
  const auto p = project(pose, k, m.world_pt);
  return p ? (*p - m.query_pt).norm() : std::numeric_limits<double>::infinity();
}

// Truncated quadratic cost sum_i min(r_i^2, t^2). Stops early and returns a
// partial sum once it exceeds `bound`.
inline double msac_score(const Pose& pose, const CameraIntrinsics& k, std::span<const Match2D3D> matches,
                         double inlier_px, double bound = std::numeric_limits<double>::infinity()) {
  const double t2 = inlier_px * inlier_px;
  double score = 0.0;
  for (const Match2D3D& m : matches) {
    const Vec3 cam = pose.rotation * (m.world_pt - pose.center);
    double r2 = t2;
    if (cam.z() > kNearPlane) {
      const double iz = 1.0 / cam.z();
      const double du = k.fx * cam.x() * iz + k.cx - m.query_pt.x();
      const double dv = k.fy * cam.y() * iz + k.cy - m.query_pt.y();
      r2 = std::min(du * du + dv * dv, t2);
    }
    score += r2;
    if (score > bound) return score;
  }
  return score;
}

inline std::vector<std::size_t> find_inliers(const Pose& pose, const CameraIntrinsics& k,
                                             std::span<const Match2D3D> matches, double inlier_px) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (reprojection_error(pose, k, matches[i]) <= inlier_px) out.push_back(i);
  return out;
}

namespace ransac_detail {

// Sum of Cauchy losses (s^2/2) ln(1 + r^2/s^2) of pixel residuals over a set of
// matches. The pose is updated as R <- exp(w) R, c <- c + dc.
struct CauchyPoseProblem {
  const CameraIntrinsics& k;
  std::span<const Match2D3D> matches;
  std::span<const std::size_t> subset;
  double scale;

  double evaluate(const Pose& pose, Eigen::Matrix<double, 6, 6>* h, Eigen::Matrix<double, 6, 1>* g) const {
    if (h) h->setZero();
    if (g) g->setZero();
    const double s2 = scale * scale;
    double cost = 0.0;
    for (std::size_t idx : subset) {
      const Match2D3D& m = matches[idx];
      const Vec3 cam = pose.to_camera(m.world_pt);
      if (!(cam.z() > kNearPlane)) return std::numeric_limits<double>::infinity();
      const double iz = 1.0 / cam.z();
      const Vec2 r(k.fx * cam.x() * iz + k.cx - m.query_pt.x(), k.fy * cam.y() * iz + k.cy - m.query_pt.y());
      const double r2 = r.squaredNorm();
      cost += 0.5 * s2 * std::log1p(r2 / s2);
      if (h) {
        const double w = 1.0 / (1.0 + r2 / s2);
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << k.fx * iz, 0.0, -k.fx * cam.x() * iz * iz, 0.0, k.fy * iz, -k.fy * cam.y() * iz * iz;
        Eigen::Matrix<double, 3, 6> dcam;
        dcam.leftCols<3>() = -skew(cam);
        dcam.rightCols<3>() = -pose.rotation;
        const Eigen::Matrix<double, 2, 6> j = dproj * dcam;
        *h += w * j.transpose() * j;
        *g += w * j.transpose() * r;
      }
    }
    return cost;
  }

  Pose retract(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) const {
    Pose out(exp_so3(delta.head<3>()) * pose.rotation, pose.center + delta.tail<3>());
    // Re-orthonormalize to keep rounding from accumulating.
    const Eigen::JacobiSVD<Mat3> svd(out.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    return out;
  }
};

inline std::size_t required_iterations(const RansacConfig& cfg, std::size_t inliers, std::size_t n) {
  const double w = static_cast<double>(inliers) / static_cast<double>(n);
  const double p_good = w * w * w;
  double needed = static_cast<double>(cfg.max_iterations);
  if (p_good >= 1.0) {
    needed = 0.0;
  } else if (p_good > 0.0) {
    needed = std::ceil(std::log(1.0 - cfg.confidence) / std::log1p(-p_good));
  }
  needed = std::clamp(needed, static_cast<double>(cfg.min_iterations), static_cast<double>(cfg.max_iterations));
  return static_cast<std::size_t>(needed);
}

// Uniform index in [0, n) without modulo bias.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

}  // namespace ransac_detail

// Minimizes the Cauchy loss over `subset` starting from `init`. The returned
// cost never exceeds the initial one.
inline LmResult<Pose> refine_pose_cauchy(const Pose& init, const CameraIntrinsics& k,
                                         std::span<const Match2D3D> matches, std::span<const std::size_t> subset,
                                         double scale, const LmOptions& opts = {}) {
  return levenberg_marquardt<6>(ransac_detail::CauchyPoseProblem{k, matches, subset, scale}, init, opts);
}

// Called with every pose produced by the minimal solver; used by tests.
using HypothesisObserver = std::function<void(const Pose&)>;

// LO-RANSAC over 2D-3D matches with undistorted query points. Absent with
// fewer than four matches or fewer than four inliers.
inline std::optional<LocalizationResult> loransac_pose(std::span<const Match2D3D> matches,
                                                       const CameraIntrinsics& k, const RansacConfig& cfg,
                                                       const HypothesisObserver& observer = {}) {
  using namespace ransac_detail;
  cfg.validate();
  const std::size_t n = matches.size();
  if (n < 4) return std::nullopt;

  std::vector<Vec3> bearings(n);
  for (std::size_t i = 0; i < n; ++i) bearings[i] = k.bearing(matches[i].query_pt);

  std::mt19937_64 rng(cfg.seed);
  Pose best_pose;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best_inliers = 0;
  std::size_t needed = cfg.min_iterations;

  auto consider = [&](const Pose& pose, double score) {
    best_pose = pose;
    best_score = score;
    best_inliers = find_inliers(pose, k, matches, cfg.inlier_px).size();
    needed = required_iterations(cfg, best_inliers, n);
  };

  std::size_t it = 0;
  for (; it < needed; ++it) {
    std::array<std::size_t, 3> sample;
    sample[0] = uniform_index(rng, n);
    do sample[1] = uniform_index(rng, n);
    while (sample[1] == sample[0]);
    do sample[2] = uniform_index(rng, n);
    while (sample[2] == sample[0] || sample[2] == sample[1]);

    const std::array<BearingPoint, 3> corr = {BearingPoint{bearings[sample[0]], matches[sample[0]].world_pt},
                                              BearingPoint{bearings[sample[1]], matches[sample[1]].world_pt},
                                              BearingPoint{bearings[sample[2]], matches[sample[2]].world_pt}};
    for (const Pose& hyp : p3p(corr)) {
      if (observer) observer(hyp);
      const double score = msac_score(hyp, k, matches, cfg.inlier_px, best_score);
      if (!(score < best_score)) continue;
      consider(hyp, score);
      if (!cfg.lo_refine_every_best) continue;
      const auto inl = find_inliers(best_pose, k, matches, cfg.inlier_px);
      if (inl.size() < 4) continue;
      const auto lo = refine_pose_cauchy(best_pose, k, matches, inl, cfg.cauchy_scale());
      const double lo_score = msac_score(lo.params, k, matches, cfg.inlier_px);
      if (lo_score < best_score) consider(lo.params, lo_score);
    }
  }
  if (!std::isfinite(best_score)) return std::nullopt;

  const auto inl = find_inliers(best_pose, k, matches, cfg.inlier_px);
  if (inl.size() >= 4) {
    const auto final_fit = refine_pose_cauchy(best_pose, k, matches, inl, cfg.cauchy_scale());
    const double score = msac_score(final_fit.params, k, matches, cfg.inlier_px);
    if (score <= best_score) {
      best_pose = final_fit.params;
      best_score = score;
    }
  }

  LocalizationResult result;
  result.pose = best_pose;
  result.inliers = find_inliers(best_pose, k, matches, cfg.inlier_px);
  result.msac_score = best_score;
  result.num_iterations = it;
  if (result.inliers.size() < 4) return std::nullopt;
  return result;
}

}  // namespace meshloc
