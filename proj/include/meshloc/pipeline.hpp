#pragma once

// File-driven localization: lifting, estimation and refinement per query,
// database view rendering, and evaluation against ground truth.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "meshloc/averaging.hpp"
#include "meshloc/covis.hpp"
#include "meshloc/error.hpp"
#include "meshloc/formats.hpp"
#include "meshloc/geom.hpp"
#include "meshloc/image_io.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/mesh.hpp"
#include "meshloc/ply.hpp"
#include "meshloc/raster.hpp"
#include "meshloc/ransac.hpp"
#include "meshloc/synth.hpp"

namespace meshloc {

enum class LiftStrategy { Individual, Merge, Triangulate };

inline std::string_view to_string(LiftStrategy s) {
  switch (s) {
    case LiftStrategy::Individual: return "individual";
    case LiftStrategy::Merge: return "merge";
    case LiftStrategy::Triangulate: return "triangulate";
  }
  return "?";
}

inline LiftStrategy lift_strategy_from_string(std::string_view s) {
  if (s == "individual" || s == "I") return LiftStrategy::Individual;
  if (s == "merge" || s == "M") return LiftStrategy::Merge;
  if (s == "triangulate" || s == "T") return LiftStrategy::Triangulate;
  throw Error("unknown lifting strategy '" + std::string(s) + "'");
}

struct PipelineConfig {
  std::filesystem::path mesh;
  std::filesystem::path db_views;
  std::filesystem::path queries;
  std::filesystem::path pairs;
  std::filesystem::path matches_dir;
  std::filesystem::path depth_cache;   // <stem>.dmap files; empty renders on demand
  std::filesystem::path output;        // estimated poses
  std::filesystem::path diagnostics;   // per-query JSON, optional
  std::filesystem::path render_dir;    // output of render_db_views

  LiftStrategy strategy = LiftStrategy::Individual;
  bool covisibility = false;
  bool position_averaging = false;
  AveragingConfig averaging;
  bool averaging_inliers_only = false;  // count PA support among RANSAC inliers only
  RansacConfig ransac;
  RenderStyle render_style = RenderStyle::Colored;

  std::size_t top_k = 50;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    ransac.validate();
    if (position_averaging) averaging.validate();
    if (top_k == 0) throw Error("top-k must be at least 1");
    if (threads == 0) throw Error("thread count must be at least 1");
  }
};

namespace pipeline_detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("expected a boolean, got '" + v + "'");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace pipeline_detail

// RANSAC seed for one query: depends on the run seed and the query name only,
// so results do not depend on scheduling.
inline std::uint64_t query_seed(std::uint64_t seed, std::string_view query) {
  return pipeline_detail::splitmix(seed ^ pipeline_detail::fnv1a(query));
}

// Sets one configuration key. Relative paths are resolved against `base`.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value,
                             const std::filesystem::path& base = {}) {
  using namespace pipeline_detail;
  auto path = [&] { return value.empty() ? std::filesystem::path{} : base / value; };
  auto num = [&] {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != value.size() || value.empty()) throw Error("config key '" + key + "' expects a number");
    return v;
  };
  auto count = [&] {
    const double v = num();
    if (v < 0.0 || v != std::floor(v)) throw Error("config key '" + key + "' expects a non-negative integer");
    return static_cast<std::size_t>(v);
  };
  if (key == "mesh") cfg.mesh = path();
  else if (key == "db_views") cfg.db_views = path();
  else if (key == "queries") cfg.queries = path();
  else if (key == "pairs") cfg.pairs = path();
  else if (key == "matches_dir") cfg.matches_dir = path();
  else if (key == "depth_cache") cfg.depth_cache = path();
  else if (key == "output") cfg.output = path();
  else if (key == "diagnostics") cfg.diagnostics = path();
  else if (key == "render_dir") cfg.render_dir = path();
  else if (key == "strategy") cfg.strategy = lift_strategy_from_string(value);
  else if (key == "covisibility") cfg.covisibility = parse_bool(value);
  else if (key == "position_averaging") cfg.position_averaging = parse_bool(value);
  else if (key == "pa_d_vol") cfg.averaging.d_vol = num();
  else if (key == "pa_d_step") cfg.averaging.d_step = num();
  else if (key == "pa_inliers_only") cfg.averaging_inliers_only = parse_bool(value);
  else if (key == "inlier_px") cfg.ransac.inlier_px = num();
  else if (key == "min_iterations") cfg.ransac.min_iterations = count();
  else if (key == "max_iterations") cfg.ransac.max_iterations = count();
  else if (key == "confidence") cfg.ransac.confidence = num();
  else if (key == "cauchy_scale_px") cfg.ransac.cauchy_scale_px = num();
  else if (key == "render_style") cfg.render_style = render_style_from_string(value);
  else if (key == "top_k") cfg.top_k = count();
  else if (key == "threads") cfg.threads = count();
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else throw Error("unknown config key '" + key + "'");
}

// `key = value` lines; '#' starts a comment.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text, const std::filesystem::path& base = {}) {
  std::size_t offset = 0;
  while (offset < text.size()) {
    const std::size_t end = std::min(text.find('\n', offset), text.size());
    std::string line(text.substr(offset, end - offset));
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = pipeline_detail::trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("config line without '='", offset);
      try {
        set_config_value(cfg, pipeline_detail::trim(line.substr(0, eq)), pipeline_detail::trim(line.substr(eq + 1)),
                         base);
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(e.what(), offset);
      }
    }
    offset = end + 1;
  }
}

inline void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  apply_config_text(cfg, io_detail::read_file(path), path.parent_path());
}

// Paths are written relative to `base` when they lie below it.
inline std::string format_config(const PipelineConfig& cfg, const std::filesystem::path& base = {}) {
  using format_detail::fmt_double;
  auto rel = [&](const std::filesystem::path& p) {
    if (p.empty() || base.empty()) return p.generic_string();
    return p.lexically_relative(base).generic_string();
  };
  std::ostringstream o;
  o << "mesh = " << rel(cfg.mesh) << "\n"
    << "db_views = " << rel(cfg.db_views) << "\n"
    << "queries = " << rel(cfg.queries) << "\n"
    << "pairs = " << rel(cfg.pairs) << "\n"
    << "matches_dir = " << rel(cfg.matches_dir) << "\n"
    << "depth_cache = " << rel(cfg.depth_cache) << "\n"
    << "output = " << rel(cfg.output) << "\n"
    << "diagnostics = " << rel(cfg.diagnostics) << "\n"
    << "render_dir = " << rel(cfg.render_dir) << "\n"
    << "strategy = " << to_string(cfg.strategy) << "\n"
    << "covisibility = " << (cfg.covisibility ? "true" : "false") << "\n"
    << "position_averaging = " << (cfg.position_averaging ? "true" : "false") << "\n"
    << "pa_d_vol = " << fmt_double(cfg.averaging.d_vol) << "\n"
    << "pa_d_step = " << fmt_double(cfg.averaging.d_step) << "\n"
    << "pa_inliers_only = " << (cfg.averaging_inliers_only ? "true" : "false") << "\n"
    << "inlier_px = " << fmt_double(cfg.ransac.inlier_px) << "\n"
    << "min_iterations = " << cfg.ransac.min_iterations << "\n"
    << "max_iterations = " << cfg.ransac.max_iterations << "\n"
    << "confidence = " << fmt_double(cfg.ransac.confidence) << "\n";
  if (cfg.ransac.cauchy_scale_px) o << "cauchy_scale_px = " << fmt_double(*cfg.ransac.cauchy_scale_px) << "\n";
  o << "render_style = " << to_string(cfg.render_style) << "\n"
    << "top_k = " << cfg.top_k << "\n"
    << "threads = " << cfg.threads << "\n"
    << "seed = " << cfg.seed << "\n";
  return o.str();
}

struct QueryDiagnostics {
  std::size_t pairs_listed = 0;
  std::size_t pairs_used = 0;
  std::vector<std::string> warnings;  // one per skipped pair
  std::size_t matches_2d2d = 0;
  std::size_t matches_no_depth = 0;
  std::size_t matches_2d3d = 0;
  std::size_t components = 1;
  std::size_t inliers = 0;
  std::size_t iterations = 0;
  double time_load_s = 0.0;
  double time_lift_s = 0.0;
  double time_estimate_s = 0.0;
  double time_refine_s = 0.0;

  nlohmann::json to_json() const {
    return {{"pairs_listed", pairs_listed},
            {"pairs_used", pairs_used},
            {"warnings", warnings},
            {"matches_2d2d", matches_2d2d},
            {"matches_no_depth", matches_no_depth},
            {"matches_2d3d", matches_2d3d},
            {"components", components},
            {"inliers", inliers},
            {"iterations", iterations},
            {"time_s",
             {{"load", time_load_s}, {"lift", time_lift_s}, {"estimate", time_estimate_s}, {"refine", time_refine_s}}}};
  }
};

struct QueryOutcome {
  std::string name;
  std::optional<Pose> pose;
  QueryDiagnostics diagnostics;
};

// Everything a run shares across queries: parsed inputs plus lazily loaded
// mesh and depth maps. Safe to use from several threads.
class LocalizationContext {
 public:
  explicit LocalizationContext(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    db_ = read_db_views(cfg_.db_views);
    for (std::size_t i = 0; i < db_.size(); ++i) {
      if (!db_index_.emplace(db_[i].name, i).second) throw Error("duplicate database image '" + db_[i].name + "'");
      db_[i].intrinsics.validate();
    }
    for (QueryRecord& q : read_queries(cfg_.queries)) {
      q.intrinsics.validate();
      const std::string name = q.name;
      if (!queries_.emplace(name, std::move(q)).second) throw Error("duplicate query '" + name + "'");
    }
    for (auto& [q, db] : read_pairs(cfg_.pairs)) {
      auto& list = pairs_[q];
      if (std::find(list.begin(), list.end(), db) == list.end()) list.push_back(db);
    }
    depth_once_ = std::make_unique<std::once_flag[]>(db_.size());
    depth_.resize(db_.size());
  }

  const PipelineConfig& config() const { return cfg_; }

  std::vector<std::string> query_names() const {
    std::vector<std::string> out;
    for (const auto& [name, q] : queries_) out.push_back(name);
    return out;
  }

  const QueryRecord* query(const std::string& name) const {
    const auto it = queries_.find(name);
    return it == queries_.end() ? nullptr : &it->second;
  }

  // Database images retrieved for a query, in pairs-file order, at most top_k.
  std::vector<std::string> retrieved(const std::string& query) const {
    const auto it = pairs_.find(query);
    if (it == pairs_.end()) return {};
    std::vector<std::string> out = it->second;
    if (out.size() > cfg_.top_k) out.resize(cfg_.top_k);
    return out;
  }

  std::optional<std::size_t> db_index(const std::string& name) const {
    const auto it = db_index_.find(name);
    if (it == db_index_.end()) return std::nullopt;
    return it->second;
  }

  const DbViewRecord& db_view(std::size_t i) const { return db_[i]; }

  // Cached depth map when present in depth_cache, otherwise rendered from the
  // mesh with the view's pinhole intrinsics. Throws on unreadable files.
  std::shared_ptr<const DepthMap> depth(std::size_t i) const {
    std::call_once(depth_once_[i], [&] {
      const DbViewRecord& v = db_[i];
      const CameraIntrinsics k = v.intrinsics.undistorted();
      if (!cfg_.depth_cache.empty()) {
        const auto path = cfg_.depth_cache / (file_stem(v.name) + ".dmap");
        if (std::filesystem::exists(path)) {
          DepthMap dm = load_depth_map(path);
          if (dm.width != k.width || dm.height != k.height)
            throw Error("cached depth map " + path.string() + " does not match the camera size");
          depth_[i] = std::make_shared<const DepthMap>(std::move(dm));
          return;
        }
      }
      depth_[i] = std::make_shared<const DepthMap>(render_depth(mesh(), v.pose, k));
    });
    if (!depth_[i]) throw Error("depth map for '" + db_[i].name + "' is unavailable");
    return depth_[i];
  }

  const TriangleMesh& mesh() const {
    std::call_once(mesh_once_, [&] {
      mesh_ = load_mesh(cfg_.mesh);
      mesh_.validate();
    });
    return mesh_;
  }

 private:
  PipelineConfig cfg_;
  std::vector<DbViewRecord> db_;
  std::map<std::string, std::size_t> db_index_;
  std::map<std::string, QueryRecord> queries_;
  std::map<std::string, std::vector<std::string>> pairs_;
  mutable std::unique_ptr<std::once_flag[]> depth_once_;
  mutable std::vector<std::shared_ptr<const DepthMap>> depth_;
  mutable std::once_flag mesh_once_;
  mutable TriangleMesh mesh_;
};

// Localizes one query. Pairs whose database image, matches file or depth map
// is unusable are skipped with a warning; the pose is absent when no pair is
// usable or estimation fails.
inline QueryOutcome run_query(const LocalizationContext& ctx, const std::string& name) {
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  const PipelineConfig& cfg = ctx.config();
  QueryOutcome out;
  out.name = name;
  QueryDiagnostics& diag = out.diagnostics;
  const QueryRecord* q = ctx.query(name);
  if (!q) throw Error("unknown query '" + name + "'");

  auto t0 = clock::now();
  std::vector<DatabaseView> views;
  std::vector<Match2D2D> matches;
  std::vector<Vec2> qpts;
  const auto retrieved = ctx.retrieved(name);
  diag.pairs_listed = retrieved.size();
  for (const std::string& db_name : retrieved) {
    const auto idx = ctx.db_index(db_name);
    if (!idx) {
      diag.warnings.push_back(db_name + ": not in the database view list");
      continue;
    }
    const auto mpath = matches_path(cfg.matches_dir, name, db_name);
    if (!std::filesystem::exists(mpath)) {
      diag.warnings.push_back(db_name + ": no matches file " + mpath.string());
      continue;
    }
    std::vector<MatchRecord> records;
    std::shared_ptr<const DepthMap> depth;
    try {
      records = read_matches(mpath);
      depth = ctx.depth(*idx);
    } catch (const std::exception& e) {
      diag.warnings.push_back(db_name + ": " + e.what());
      continue;
    }
    const DbViewRecord& v = ctx.db_view(*idx);
    std::vector<Vec2> dpts;
    for (const MatchRecord& r : records) {
      qpts.push_back(r.query_pt);
      dpts.push_back(r.db_pt);
    }
    dpts = undistort_points(v.intrinsics, dpts);
    const auto id = static_cast<ImageId>(views.size());
    views.push_back({v.pose, v.intrinsics.undistorted(), *depth});
    for (std::size_t i = 0; i < records.size(); ++i)
      matches.push_back({Vec2::Zero(), id, dpts[i], records[i].score});
    ++diag.pairs_used;
  }
  qpts = undistort_points(q->intrinsics, qpts);
  for (std::size_t i = 0; i < matches.size(); ++i) matches[i].query_pt = qpts[i];
  diag.matches_2d2d = matches.size();
  auto t1 = clock::now();
  diag.time_load_s = seconds(t0, t1);
  if (views.empty()) return out;

  std::vector<Match2D3D> lifted;
  switch (cfg.strategy) {
    case LiftStrategy::Individual:
    case LiftStrategy::Merge: {
      IndividualLift ind = lift_individual(matches, views);
      diag.matches_no_depth = ind.dropped;
      lifted = cfg.strategy == LiftStrategy::Merge ? merge_all(ind.matches, views, cfg.ransac.inlier_px)
                                                   : std::move(ind.matches);
      break;
    }
    case LiftStrategy::Triangulate: lifted = triangulate_all(matches, views, cfg.ransac.inlier_px); break;
  }
  diag.matches_2d3d = lifted.size();
  auto t2 = clock::now();
  diag.time_lift_s = seconds(t1, t2);

  const CameraIntrinsics qk = q->intrinsics.undistorted();
  RansacConfig rc = cfg.ransac;
  rc.seed = query_seed(cfg.seed, name);
  if (cfg.covisibility && !lifted.empty()) diag.components = covis_components(lifted).size();
  const auto est = estimate_with_covisibility(lifted, qk, rc, cfg.covisibility);
  auto t3 = clock::now();
  diag.time_estimate_s = seconds(t2, t3);
  if (!est) return out;
  diag.inliers = est->inliers.size();
  diag.iterations = est->num_iterations;

  Pose pose = est->pose;
  if (cfg.position_averaging) {
    if (cfg.averaging_inliers_only) {
      std::vector<Match2D3D> inl;
      for (std::size_t i : est->inliers) inl.push_back(lifted[i]);
      pose = position_average(pose, inl, qk, cfg.ransac.inlier_px, cfg.averaging);
    } else {
      pose = position_average(pose, lifted, qk, cfg.ransac.inlier_px, cfg.averaging);
    }
  }
  diag.time_refine_s = seconds(t3, clock::now());
  out.pose = pose;
  return out;
}

// Localizes every query in the queries file on cfg.threads workers. Results
// are ordered by query name.
inline std::vector<QueryOutcome> localize_all(const LocalizationContext& ctx) {
  const auto names = ctx.query_names();
  std::vector<QueryOutcome> results(names.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= names.size()) return;
      try {
        results[i] = run_query(ctx, names[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(ctx.config().threads, std::max<std::size_t>(names.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

// Writes the localized queries to cfg.output and, if set, diagnostics for all
// queries to cfg.diagnostics.
inline void write_outcomes(const PipelineConfig& cfg, const std::vector<QueryOutcome>& results) {
  std::vector<PoseRecord> poses;
  nlohmann::json diag = nlohmann::json::object();
  for (const QueryOutcome& r : results) {
    if (r.pose) poses.push_back(PoseRecord::from_pose(r.name, *r.pose));
    nlohmann::json d = r.diagnostics.to_json();
    d["localized"] = r.pose.has_value();
    diag[r.name] = std::move(d);
  }
  if (cfg.output.empty()) throw Error("no output path for poses");
  if (cfg.output.has_parent_path()) std::filesystem::create_directories(cfg.output.parent_path());
  write_poses(cfg.output, poses);
  if (!cfg.diagnostics.empty()) {
    if (cfg.diagnostics.has_parent_path()) std::filesystem::create_directories(cfg.diagnostics.parent_path());
    io_detail::write_file(cfg.diagnostics, diag.dump(2) + "\n");
  }
}

struct EvalThresholds {
  std::vector<std::pair<double, double>> levels;  // (meters, degrees)

  void validate() const {
    if (levels.empty()) throw Error("at least one evaluation threshold is required");
    for (const auto& [m, deg] : levels)
      if (!(m >= 0.0) || !(deg >= 0.0)) throw Error("evaluation thresholds must be non-negative");
  }

  static EvalThresholds aachen() { return {{{0.25, 2.0}, {0.5, 5.0}, {5.0, 10.0}}}; }
  static EvalThresholds twelve_scenes() { return {{{0.05, 5.0}, {0.07, 7.0}, {0.10, 10.0}}}; }
};

// Percentage of ground-truth queries whose estimate is within each threshold
// level in both position and rotation. Missing estimates count as failures.
inline std::vector<double> evaluate(const std::vector<PoseRecord>& estimates, const std::vector<PoseRecord>& gt,
                                    const EvalThresholds& thresholds) {
  thresholds.validate();
  std::map<std::string, Pose> gt_by_name;
  for (const PoseRecord& r : gt)
    if (!gt_by_name.emplace(r.name, r.pose()).second) throw Error("duplicate ground-truth pose for '" + r.name + "'");
  std::set<std::string> seen;
  std::vector<std::size_t> hits(thresholds.levels.size(), 0);
  for (const PoseRecord& r : estimates) {
    const auto it = gt_by_name.find(r.name);
    if (it == gt_by_name.end()) throw Error("estimate for '" + r.name + "' has no ground truth");
    if (!seen.insert(r.name).second) throw Error("duplicate estimate for '" + r.name + "'");
    const PoseError e = pose_error(r.pose(), it->second);
    for (std::size_t l = 0; l < thresholds.levels.size(); ++l)
      if (e.position_m <= thresholds.levels[l].first && e.rotation_deg <= thresholds.levels[l].second) ++hits[l];
  }
  std::vector<double> out;
  for (std::size_t h : hits) out.push_back(gt.empty() ? 0.0 : 100.0 * static_cast<double>(h) / gt.size());
  return out;
}

inline std::vector<double> evaluate_files(const std::filesystem::path& estimates, const std::filesystem::path& gt,
                                          const EvalThresholds& thresholds) {
  return evaluate(read_poses(estimates), read_poses(gt), thresholds);
}

// Writes <stem>.dmap for every database view, and <stem>.ppm in the
// configured style unless it is depth-only.
inline void render_db_views(const PipelineConfig& cfg) {
  if (cfg.render_dir.empty()) throw Error("no render output directory");
  TriangleMesh mesh = load_mesh(cfg.mesh);
  mesh.validate();
  if (cfg.render_style == RenderStyle::Colored && !mesh.has_colors())
    throw Error("render style 'colored' requires vertex_colors, which the mesh lacks");
  if (cfg.render_style == RenderStyle::AmbientOcclusion && !mesh.has_ao())
    throw Error("render style 'ao' requires vertex_ao, which the mesh lacks");
  const auto views = read_db_views(cfg.db_views);
  std::filesystem::create_directories(cfg.render_dir);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= views.size()) return;
      try {
        const DbViewRecord& v = views[i];
        const CameraIntrinsics k = v.intrinsics.undistorted();
        const std::string stem = file_stem(v.name);
        save_depth_map(cfg.render_dir / (stem + ".dmap"), render_depth(mesh, v.pose, k));
        if (cfg.render_style != RenderStyle::DepthOnly)
          save_ppm(cfg.render_dir / (stem + ".ppm"), render_image(mesh, v.pose, k, cfg.render_style));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(std::max<std::size_t>(cfg.threads, 1), std::max<std::size_t>(views.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Configuration for a directory written by export_scene. Rendered depth maps
// go to and are read from <dir>/render.
inline PipelineConfig exported_scene_config(const std::filesystem::path& dir) {
  using L = ExportLayout;
  PipelineConfig cfg;
  cfg.mesh = dir / L::kMesh;
  cfg.db_views = dir / L::kDbViews;
  cfg.queries = dir / L::kQueries;
  cfg.pairs = dir / L::kPairs;
  cfg.matches_dir = dir / L::kMatchesDir;
  cfg.render_dir = dir / "render";
  cfg.depth_cache = dir / "render";
  cfg.output = dir / "poses.txt";
  cfg.diagnostics = dir / "diagnostics.json";
  return cfg;
}

}  // namespace meshloc
