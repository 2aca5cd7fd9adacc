#pragma once

// Lifting of 2D-2D query/database matches to 2D-3D query/world matches.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/lm.hpp"
#include "meshloc/mesh.hpp"

namespace meshloc {

using ImageId = std::uint32_t;

// A database feature supporting a 3D point.
struct Observation {
  ImageId db_image = 0;
  Vec2 db_pt = Vec2::Zero();

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Match2D2D {
  Vec2 query_pt = Vec2::Zero();  // undistorted
  ImageId db_image = 0;
  Vec2 db_pt = Vec2::Zero();
  std::optional<double> score;
};

struct Match2D3D {
  Vec2 query_pt = Vec2::Zero();
  Vec3 world_pt = Vec3::Zero();
  std::vector<Observation> sources;
};

// A database image with its pose, pinhole intrinsics and rendered depth.
// Views are addressed by their index, which is the ImageId used in matches.
struct DatabaseView {
  Pose pose;
  CameraIntrinsics intrinsics;
  DepthMap depth;
};

// Query features are identified by their pixel position quantized to 1e-3 px.
using QueryKey = std::pair<long long, long long>;

inline QueryKey query_key(const Vec2& q) {
  return {std::llround(q.x() * 1000.0), std::llround(q.y() * 1000.0)};
}

// Groups match indices by query feature, ordered lexicographically by the
// quantized query position. Works for any match type with a query_pt.
template <typename Range>
std::vector<std::vector<std::size_t>> group_by_query(const Range& matches) {
  std::map<QueryKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < matches.size(); ++i) groups[query_key(matches[i].query_pt)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(groups.size());
  for (auto& [key, idx] : groups) out.push_back(std::move(idx));
  return out;
}

struct IndividualLift {
  std::vector<Match2D3D> matches;
  std::size_t dropped = 0;  // matches without valid depth
};

inline const DatabaseView& view_for(std::span<const DatabaseView> views, ImageId id) {
  if (id >= views.size()) throw Error("match refers to unknown database image " + std::to_string(id));
  return views[id];
}

// One 2D-3D match per 2D-2D match whose database feature has a valid depth.
inline IndividualLift lift_individual(std::span<const Match2D2D> matches, std::span<const DatabaseView> views) {
  IndividualLift out;
  out.matches.reserve(matches.size());
  for (const Match2D2D& m : matches) {
    const DatabaseView& view = view_for(views, m.db_image);
    const auto depth = lookup_depth(view.depth, m.db_pt);
    if (!depth) {
      ++out.dropped;
      continue;
    }
    out.matches.push_back(
        {m.query_pt, unproject(view.pose, view.intrinsics, m.db_pt, *depth), {{m.db_image, m.db_pt}}});
  }
  return out;
}

// Pixel residual of `x` against one database observation; nullopt when the
// point is behind that camera.
inline std::optional<Vec2> observation_residual(std::span<const DatabaseView> views, const Observation& obs,
                                                const Vec3& x) {
  const DatabaseView& v = view_for(views, obs.db_image);
  const auto p = project(v.pose, v.intrinsics, x);
  if (!p) return std::nullopt;
  return *p - obs.db_pt;
}

inline double observation_error(std::span<const DatabaseView> views, const Observation& obs, const Vec3& x) {
  const auto r = observation_residual(views, obs, x);
  return r ? r->norm() : std::numeric_limits<double>::infinity();
}

namespace lift_detail {

// 0.5 * sum of squared reprojection errors of a 3D point over observations.
struct PointProblem {
  std::span<const DatabaseView> views;
  std::span<const Observation> observations;

  double evaluate(const Vec3& x, Eigen::Matrix3d* h, Eigen::Vector3d* g) const {
    if (h) h->setZero();
    if (g) g->setZero();
    double cost = 0.0;
    for (const Observation& obs : observations) {
      const DatabaseView& v = view_for(views, obs.db_image);
      const Vec3 cam = v.pose.to_camera(x);
      if (!(cam.z() > kNearPlane)) return std::numeric_limits<double>::infinity();
      const double iz = 1.0 / cam.z();
      const Vec2 r(v.intrinsics.fx * cam.x() * iz + v.intrinsics.cx - obs.db_pt.x(),
                   v.intrinsics.fy * cam.y() * iz + v.intrinsics.cy - obs.db_pt.y());
      cost += 0.5 * r.squaredNorm();
      if (h) {
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << v.intrinsics.fx * iz, 0.0, -v.intrinsics.fx * cam.x() * iz * iz, 0.0, v.intrinsics.fy * iz,
            -v.intrinsics.fy * cam.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> j = dproj * v.pose.rotation;
        *h += j.transpose() * j;
        *g += j.transpose() * r;
      }
    }
    return cost;
  }

  Vec3 retract(const Vec3& x, const Eigen::Vector3d& delta) const { return x + delta; }
};

}  // namespace lift_detail

// Minimizes the sum of squared reprojection errors of a point over the
// given observations, starting from `init`.
inline LmResult<Vec3> refine_point(std::span<const DatabaseView> views, std::span<const Observation> observations,
                                   const Vec3& init, const LmOptions& opts = {}) {
  return levenberg_marquardt<3>(lift_detail::PointProblem{views, observations}, init, opts);
}

// Merges the 2D-3D candidates of one query feature into a single match when a
// consensus exists. Each candidate is scored by the truncated quadratic
// sum_j min(r_j^2, t^2) of its reprojection errors against all database
// observations of the group; the best one is refined on its inliers. Without a
// candidate of at least two inliers the input is returned unchanged.
inline std::vector<Match2D3D> merge_matches(std::span<const Match2D3D> candidates,
                                            std::span<const DatabaseView> views, double inlier_px) {
  std::vector<Match2D3D> unmerged(candidates.begin(), candidates.end());
  if (candidates.empty()) return unmerged;

  std::vector<Observation> sources;
  for (const Match2D3D& c : candidates) sources.insert(sources.end(), c.sources.begin(), c.sources.end());

  const double t2 = inlier_px * inlier_px;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = 0.0;
    for (const Observation& obs : sources) {
      const double r = observation_error(views, obs, candidates[i].world_pt);
      score += std::min(r * r, t2);
    }
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }

  std::vector<Observation> inliers;
  for (const Observation& obs : sources)
    if (observation_error(views, obs, candidates[best].world_pt) <= inlier_px) inliers.push_back(obs);
  if (inliers.size() < 2) return unmerged;

  const auto refined = refine_point(views, inliers, candidates[best].world_pt);
  return {Match2D3D{candidates[best].query_pt, refined.params, std::move(inliers)}};
}

// Applies merge_matches to every query-feature group of `matches`; output is
// ordered by query position.
inline std::vector<Match2D3D> merge_all(std::span<const Match2D3D> matches, std::span<const DatabaseView> views,
                                        double inlier_px) {
  std::vector<Match2D3D> out;
  std::vector<Match2D3D> group;
  for (const auto& idx : group_by_query(matches)) {
    group.clear();
    for (std::size_t i : idx) group.push_back(matches[i]);
    auto merged = merge_matches(group, views, inlier_px);
    std::move(merged.begin(), merged.end(), std::back_inserter(out));
  }
  return out;
}

inline constexpr double kMinTriangulationAngleDeg = 1.0;

// Triangulates the 3D point of one query feature from its database
// observations: DLT over all rays, then reprojection-error refinement. Absent
// for fewer than two database images, a maximum ray angle below one degree, a
// point behind any source camera, or any residual above 3 * inlier_px.
inline std::optional<Match2D3D> lift_triangulate(std::span<const Match2D2D> group,
                                                 std::span<const DatabaseView> views, double inlier_px) {
  if (group.empty()) return std::nullopt;
  std::vector<Observation> obs;
  std::vector<ImageId> images;
  for (const Match2D2D& m : group) {
    obs.push_back({m.db_image, m.db_pt});
    images.push_back(m.db_image);
  }
  std::sort(images.begin(), images.end());
  if (std::unique(images.begin(), images.end()) - images.begin() < 2) return std::nullopt;

  std::vector<Vec3> rays;
  for (const Observation& o : obs) {
    const DatabaseView& v = view_for(views, o.db_image);
    rays.push_back(v.pose.rotation.transpose() * v.intrinsics.bearing(o.db_pt));
  }
  double max_angle = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i)
    for (std::size_t j = i + 1; j < rays.size(); ++j)
      max_angle = std::max(max_angle, std::atan2(rays[i].cross(rays[j]).norm(), rays[i].dot(rays[j])));
  if (rad_to_deg(max_angle) < kMinTriangulationAngleDeg) return std::nullopt;

  Eigen::MatrixXd a(2 * obs.size(), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const DatabaseView& v = view_for(views, obs[i].db_image);
    const ProjectivePose p = pose_to_projective(v.pose);
    Eigen::Matrix<double, 3, 4> proj;
    proj << p.rotation, p.translation;
    const double x = (obs[i].db_pt.x() - v.intrinsics.cx) / v.intrinsics.fx;
    const double y = (obs[i].db_pt.y() - v.intrinsics.cy) / v.intrinsics.fy;
    a.row(2 * i) = x * proj.row(2) - proj.row(0);
    a.row(2 * i + 1) = y * proj.row(2) - proj.row(1);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d hom = svd.matrixV().col(3);
  if (!(std::abs(hom.w()) > 1e-12 * hom.head<3>().norm())) return std::nullopt;
  const Vec3 init = hom.head<3>() / hom.w();

  const auto refined = refine_point(views, obs, init);
  const Vec3 x = refined.params;
  for (const Observation& o : obs) {
    const auto r = observation_residual(views, o, x);
    if (!r || r->norm() > 3.0 * inlier_px) return std::nullopt;
  }
  return Match2D3D{group.front().query_pt, x, std::move(obs)};
}

// Triangulates every query-feature group; groups that fail are dropped.
inline std::vector<Match2D3D> triangulate_all(std::span<const Match2D2D> matches,
                                              std::span<const DatabaseView> views, double inlier_px) {
  std::vector<Match2D3D> out;
  std::vector<Match2D2D> group;
  for (const auto& idx : group_by_query(matches)) {
    group.clear();
    for (std::size_t i : idx) group.push_back(matches[i]);
    if (auto m = lift_triangulate(group, views, inlier_px)) out.push_back(std::move(*m));
  }
  return out;
}

}  // namespace meshloc
