#pragma once

// Procedural room scenes and synthetic 2D-2D matches standing in for real
// datasets and learned matchers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/formats.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/mesh.hpp"
#include "meshloc/ply.hpp"
#include "meshloc/raster.hpp"

namespace meshloc {

struct CameraView {
  Pose pose;
  CameraIntrinsics intrinsics;
};

struct SceneParams {
  Vec3 room_size = Vec3(6.0, 6.0, 6.0);
  std::size_t min_triangles = 768;
  std::size_t num_boxes = 0;  // axis-aligned obstacles standing on the floor
  std::size_t num_db_views = 1;
  std::size_t num_queries = 1;
  CameraIntrinsics intrinsics = default_intrinsics();
  double wall_margin = 1.0;     // camera centers keep this distance to walls
  double max_pitch_deg = 15.0;

  static CameraIntrinsics default_intrinsics() {
    CameraIntrinsics k;
    k.width = 800;
    k.height = 600;
    k.fx = k.fy = 600.0;
    k.cx = 400.0;
    k.cy = 300.0;
    return k;
  }

  void validate() const {
    if (!(room_size.minCoeff() > 0.0)) throw Error("room size must be positive");
    if (num_db_views < 1) throw Error("a scene needs at least one database view");
    if (min_triangles < 12) throw Error("a closed room needs at least 12 triangles");
    if (!(2.0 * wall_margin < room_size.minCoeff())) throw Error("wall margin leaves no room for cameras");
    intrinsics.validate();
  }
};

struct SyntheticScene {
  TriangleMesh mesh;
  std::vector<CameraView> db_views;
  std::vector<CameraView> gt_queries;
  std::uint64_t seed = 0;
};

namespace synth_detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline double gaussian(std::mt19937_64& rng) {
  // Box-Muller on our own uniforms keeps the stream identical across standard libraries.
  const double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::size_t index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(n))));
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(rng, i)]);
}

// Splits the box [lo, hi] into `n` x `n` quads per face (two triangles each).
inline void add_box(TriangleMesh& mesh, const Vec3& lo, const Vec3& hi, int n) {
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
      for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
          Vec3 p;
          p[axis] = side == 0 ? lo[axis] : hi[axis];
          p[u] = lo[u] + (hi[u] - lo[u]) * i / n;
          p[v] = lo[v] + (hi[v] - lo[v]) * j / n;
          mesh.vertices.push_back(p);
        }
      }
      const auto at = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (n + 1) + i); };
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
          mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
      }
    }
  }
}

// Camera looking along (yaw, pitch) with world z up; image x right, y down.
inline Mat3 look_rotation(double yaw, double pitch) {
  const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return r;
}

struct Obstacle {
  Vec3 lo, hi;
};

inline bool inside_any(const Vec3& p, std::span<const Obstacle> boxes, double pad) {
  for (const Obstacle& b : boxes)
    if ((p.array() > b.lo.array() - pad).all() && (p.array() < b.hi.array() + pad).all()) return true;
  return false;
}

}  // namespace synth_detail

// Axis-aligned room interior, optionally with box obstacles, plus database and
// query cameras inside the room looking at the walls. Deterministic in
// (params, seed).
inline SyntheticScene generate_scene(const SceneParams& params, std::uint64_t seed) {
  using namespace synth_detail;
  params.validate();
  std::mt19937_64 rng(seed);
  SyntheticScene scene;
  scene.seed = seed;

  int n = 1;
  while (12u * static_cast<std::size_t>(n) * n < params.min_triangles) ++n;
  add_box(scene.mesh, Vec3::Zero(), params.room_size, n);

  std::vector<Obstacle> boxes;
  for (std::size_t b = 0; b < params.num_boxes; ++b) {
    const Vec3 size(uniform(rng, 0.4, 0.9), uniform(rng, 0.4, 0.9), uniform(rng, 0.6, 0.5 * params.room_size.z()));
    const Vec3 lo(uniform(rng, 0.3, params.room_size.x() - size.x() - 0.3),
                  uniform(rng, 0.3, params.room_size.y() - size.y() - 0.3), 0.0);
    boxes.push_back({lo, lo + size});
    add_box(scene.mesh, lo, lo + size, 1);
  }

  // Smooth-ish random colors and an edge-darkening stand-in for precomputed AO.
  const std::size_t nv = scene.mesh.vertices.size();
  scene.mesh.vertex_colors.resize(nv);
  scene.mesh.vertex_ao.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& p = scene.mesh.vertices[i];
    scene.mesh.vertex_colors[i] =
        Rgb(static_cast<float>(uniform(rng, 0.1, 0.9)), static_cast<float>(uniform(rng, 0.1, 0.9)),
            static_cast<float>(uniform(rng, 0.1, 0.9)));
    std::array<double, 3> d;
    for (int a = 0; a < 3; ++a) d[a] = std::min(p[a], params.room_size[a] - p[a]);
    std::sort(d.begin(), d.end());
    scene.mesh.vertex_ao[i] = static_cast<float>(0.35 + 0.65 * std::min(1.0, d[1] / 1.5));
  }

  auto sample_view = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vec3 c;
      for (int a = 0; a < 3; ++a)
        c[a] = uniform(rng, params.wall_margin, params.room_size[a] - params.wall_margin);
      if (inside_any(c, boxes, 0.5)) continue;
      const double yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double pitch = deg_to_rad(uniform(rng, -params.max_pitch_deg, params.max_pitch_deg));
      return CameraView{Pose(look_rotation(yaw, pitch), c), params.intrinsics};
    }
    throw Error("could not place a camera outside the obstacles");
  };
  for (std::size_t i = 0; i < params.num_db_views; ++i) scene.db_views.push_back(sample_view());
  for (std::size_t i = 0; i < params.num_queries; ++i) scene.gt_queries.push_back(sample_view());
  return scene;
}

struct MatchParams {
  std::size_t n_inliers = 100;   // query features with true correspondences
  std::size_t n_outliers = 0;    // matches with a random query endpoint
  double noise_px = 0.0;         // Gaussian sigma on both endpoints
  std::size_t min_views = 1;     // database views each inlier feature must be visible in
  std::size_t max_views = 1;     // database matches emitted per inlier feature
  std::uint64_t seed = 0;
  bool allow_fewer = false;      // keep what was found instead of throwing
};

struct GeneratedMatches {
  std::vector<Match2D2D> matches;  // query points undistorted
  std::vector<std::optional<Vec3>> gt_points;  // surface point per match, empty for outliers
  Pose gt_pose;
};

inline std::vector<DepthMap> render_db_depths(const SyntheticScene& scene) {
  std::vector<DepthMap> out;
  out.reserve(scene.db_views.size());
  for (const CameraView& v : scene.db_views) out.push_back(render_depth(scene.mesh, v.pose, v.intrinsics.undistorted()));
  return out;
}

// Visibility of a world point in a view by comparison against its depth map.
// The tolerance is 1e-3 m plus the depth change across half a pixel, estimated
// from central differences; pixels on depth discontinuities (large second
// differences or invalid neighbours) never count as visible.
inline std::optional<Vec2> visible_in(const CameraView& view, const DepthMap& depth, const Vec3& x) {
  const CameraIntrinsics k = view.intrinsics.undistorted();
  const Vec3 cam = view.pose.to_camera(x);
  const auto p = project_camera(k, cam);
  if (!p) return std::nullopt;
  const int px = static_cast<int>(std::floor(p->x()));
  const int py = static_cast<int>(std::floor(p->y()));
  if (px < 1 || py < 1 || px + 1 >= depth.width || py + 1 >= depth.height) return std::nullopt;
  const double d = depth.at(px, py);
  if (!(d > 0.0)) return std::nullopt;
  double slope = 0.0;
  for (const auto& [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
    const double a = depth.at(px - dx, py - dy), b = depth.at(px + dx, py + dy);
    if (!(a > 0.0) || !(b > 0.0)) return std::nullopt;
    if (std::abs(a - 2.0 * d + b) > 1e-2 * d) return std::nullopt;
    slope += 0.5 * std::abs(b - a) / 2.0;
  }
  if (std::abs(cam.z() - d) > 1e-3 + 1.1 * slope) return std::nullopt;
  return p;
}

// Samples surface points seen by the query and at least `min_views` database
// views and emits noisy matches to up to `max_views` of them, plus outliers with
// uniform random query endpoints. Output order is a seeded shuffle.
inline GeneratedMatches generate_matches(const SyntheticScene& scene, std::size_t query_idx, const MatchParams& mp,
                                         std::span<const DepthMap> db_depths = {}) {
  using namespace synth_detail;
  if (query_idx >= scene.gt_queries.size()) throw Error("query index out of range");
  if (mp.min_views < 1 || mp.max_views < mp.min_views) throw Error("need 1 <= min_views <= max_views");
  std::vector<DepthMap> rendered;
  if (db_depths.empty()) {
    rendered = render_db_depths(scene);
    db_depths = rendered;
  }
  if (db_depths.size() != scene.db_views.size()) throw Error("one depth map per database view required");

  const CameraView& query = scene.gt_queries[query_idx];
  const CameraIntrinsics qk = query.intrinsics.undistorted();
  const DepthMap qdepth = render_depth(scene.mesh, query.pose, qk);
  std::mt19937_64 rng(mp.seed);

  GeneratedMatches out;
  out.gt_pose = query.pose;
  auto noisy = [&](const Vec2& p) {
    if (mp.noise_px == 0.0) return p;
    const double nx = gaussian(rng), ny = gaussian(rng);
    return Vec2(p.x() + mp.noise_px * nx, p.y() + mp.noise_px * ny);
  };

  std::set<std::pair<int, int>> used;
  std::size_t found = 0;
  const std::size_t budget = 200 * mp.n_inliers + 1000;
  for (std::size_t attempt = 0; attempt < budget && found < mp.n_inliers; ++attempt) {
    const int px = static_cast<int>(index(rng, static_cast<std::size_t>(qk.width)));
    const int py = static_cast<int>(index(rng, static_cast<std::size_t>(qk.height)));
    if (used.count({px, py}) || !qdepth.valid(px, py)) continue;
    const Vec2 qpt(px + 0.5, py + 0.5);
    const Vec3 x = unproject(query.pose, qk, qpt, qdepth.at(px, py));
    std::vector<std::pair<ImageId, Vec2>> seen;
    for (std::size_t v = 0; v < scene.db_views.size(); ++v)
      if (auto p = visible_in(scene.db_views[v], db_depths[v], x)) seen.emplace_back(static_cast<ImageId>(v), *p);
    if (seen.size() < mp.min_views) continue;
    shuffle(seen, rng);
    if (seen.size() > mp.max_views) seen.resize(mp.max_views);
    std::sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    used.insert({px, py});
    const Vec2 q = noisy(qpt);
    for (const auto& [id, dpt] : seen) {
      out.matches.push_back({q, id, noisy(dpt), std::nullopt});
      out.gt_points.push_back(x);
    }
    ++found;
  }
  if (found < mp.n_inliers && !mp.allow_fewer)
    throw Error("found only " + std::to_string(found) + " of " + std::to_string(mp.n_inliers) +
                " co-visible surface points");

  for (std::size_t i = 0; i < mp.n_outliers; ++i) {
    const ImageId db = static_cast<ImageId>(index(rng, scene.db_views.size()));
    const DepthMap& dm = db_depths[db];
    Vec2 dpt;
    for (int attempt = 0;; ++attempt) {
      dpt = Vec2(uniform(rng, 0.0, dm.width), uniform(rng, 0.0, dm.height));
      if (lookup_depth(dm, dpt)) break;
      if (attempt > 10000) throw Error("database view has no valid depth for outliers");
    }
    const Vec2 q(uniform(rng, 0.0, qk.width), uniform(rng, 0.0, qk.height));
    out.matches.push_back({q, db, dpt, std::nullopt});
    out.gt_points.emplace_back();
  }

  std::vector<std::size_t> order(out.matches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  GeneratedMatches shuffled;
  shuffled.gt_pose = out.gt_pose;
  for (std::size_t i : order) {
    shuffled.matches.push_back(out.matches[i]);
    shuffled.gt_points.push_back(out.gt_points[i]);
  }
  return shuffled;
}

inline std::string db_image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "db_%04zu", i);
  return buf;
}

inline std::string query_image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "query_%04zu", i);
  return buf;
}

struct ExportParams {
  MatchParams matches;
  std::size_t top_k = 50;         // pairs listed per query
  double query_k1 = 0.0;          // radial distortion applied to query cameras
};

// Files written by export_scene, relative to the output directory.
struct ExportLayout {
  static constexpr const char* kMesh = "mesh.ply";
  static constexpr const char* kDbViews = "db_views.txt";
  static constexpr const char* kQueries = "queries.txt";
  static constexpr const char* kPairs = "pairs.txt";
  static constexpr const char* kMatchesDir = "matches";
  static constexpr const char* kGroundTruth = "gt_poses.txt";
};

// Writes the scene in the pipeline's on-disk layout. Query match endpoints are
// distorted with the query camera when query_k1 != 0. Pairs list, per query,
// the database images with matches ordered by match count (ties by name).
inline void export_scene(const std::filesystem::path& dir, const SyntheticScene& scene, const ExportParams& ep) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / ExportLayout::kMatchesDir);
  save_mesh(dir / ExportLayout::kMesh, scene.mesh);

  std::vector<DbViewRecord> db;
  for (std::size_t i = 0; i < scene.db_views.size(); ++i)
    db.push_back({db_image_name(i), scene.db_views[i].pose, scene.db_views[i].intrinsics.undistorted()});
  write_db_views(dir / ExportLayout::kDbViews, db);

  const std::vector<DepthMap> depths = render_db_depths(scene);
  std::vector<QueryRecord> queries;
  std::vector<PoseRecord> gt;
  PairList pairs;
  for (std::size_t q = 0; q < scene.gt_queries.size(); ++q) {
    CameraIntrinsics qk = scene.gt_queries[q].intrinsics.undistorted();
    if (ep.query_k1 != 0.0) qk.distortion = {ep.query_k1};
    const std::string qname = query_image_name(q);
    queries.push_back({qname, qk});
    gt.push_back(PoseRecord::from_pose(qname, scene.gt_queries[q].pose));

    MatchParams mp = ep.matches;
    mp.seed = ep.matches.seed * 1000003u + q;
    mp.allow_fewer = true;  // a query without overlap still gets exported
    const GeneratedMatches gm = generate_matches(scene, q, mp, depths);
    std::vector<Vec2> qpts;
    for (const Match2D2D& m : gm.matches) qpts.push_back(m.query_pt);
    qpts = distort_points(qk, qpts);

    std::map<ImageId, std::vector<MatchRecord>> per_db;
    for (std::size_t i = 0; i < gm.matches.size(); ++i)
      per_db[gm.matches[i].db_image].push_back({qpts[i], gm.matches[i].db_pt, std::nullopt});
    std::vector<std::pair<std::size_t, ImageId>> ranked;
    for (const auto& [id, list] : per_db) ranked.emplace_back(list.size(), id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (ranked.size() > ep.top_k) ranked.resize(ep.top_k);
    for (const auto& [count, id] : ranked) {
      pairs.emplace_back(qname, db[id].name);
      write_matches(matches_path(dir / ExportLayout::kMatchesDir, qname, db[id].name), per_db[id]);
    }
  }
  write_queries(dir / ExportLayout::kQueries, queries);
  write_poses(dir / ExportLayout::kGroundTruth, gt);
  write_pairs(dir / ExportLayout::kPairs, pairs);
}

}  // namespace meshloc
