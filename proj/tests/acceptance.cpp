// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "averaging_scene.hpp"
#include "covis_oracle.hpp"
#include "meshloc/averaging.hpp"
#include "meshloc/covis.hpp"
#include "meshloc/formats.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/p3p.hpp"
#include "meshloc/pipeline.hpp"
#include "meshloc/raster.hpp"
#include "meshloc/ransac.hpp"
#include "meshloc/synth.hpp"
#include "raster_oracle.hpp"
#include "scenario.hpp"
#include "test_util.hpp"

#ifndef MESHLOC_CLI
#error "MESHLOC_CLI must name the command line tool"
#endif

using namespace meshloc;

namespace {

using clock_type = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double elapsed(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// 1
Outcome p3p_recovery() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(1001);
  std::size_t missed = 0, violations = 0, solutions = 0;
  for (int i = 0; i < 10000; ++i) {
    const Pose gt = test::random_pose(rng);
    std::array<BearingPoint, 3> c;
    for (auto& b : c) {
      const Vec3 cam = test::random_vec(rng, -2, 2) + Vec3(0, 0, 4);
      b = {cam.normalized(), gt.to_world(cam)};
    }
    bool found = false;
    for (const Pose& s : p3p(c)) {
      ++solutions;
      for (const auto& b : c)
        if (!(bearing_error(s, b) <= kP3PMaxBearingErrorRad)) ++violations;
      if ((s.center - gt.center).norm() <= 1e-9 && rotation_distance(s.rotation, gt.rotation) <= 1e-9) found = true;
    }
    missed += !found;
  }
  const double t = elapsed(t0);
  return {missed == 0 && violations == 0 && t < 5.0,
          fmt("10000 instances, GT missed %zu (tol 1e-9 m / 1e-9 rad), contract violations %zu over %zu solutions, "
              "%.2f s (limit 5 s)",
              missed, violations, solutions, t)};
}

// 2
Outcome raster_oracle() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(2002);
  std::size_t pixels = 0, disagreeing = 0, far = 0;
  double worst_fraction = 0.0, max_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose pose = test::random_pose(rng);
    const CameraIntrinsics k = test::pinhole(60, 64, 64);
    const TriangleMesh m = test::random_soup(rng, pose, k, 50);
    const DepthMap dm = render_depth(m, pose, k);
    const auto c = test::compare_with_oracle(m, pose, k, dm, 1e-4);
    pixels += c.pixels;
    disagreeing += c.disagreeing;
    far += c.disagreeing_far;
    worst_fraction = std::max(worst_fraction, static_cast<double>(c.disagreeing) / static_cast<double>(c.pixels));
    max_err = std::max(max_err, c.max_depth_error_far);
  }
  const double t = elapsed(t0);
  const double fraction = static_cast<double>(disagreeing) / static_cast<double>(pixels);
  return {fraction <= 0.005 && far == 0 && max_err <= 1e-4 && t < 60.0,
          fmt("100 meshes at 64x64, disagreeing %.3f%% overall / %.3f%% worst mesh (limit 0.5%%), %zu farther than "
              "1 px from an edge, max depth error away from edges %.2e m (tol 1e-4), %.2f s (limit 60 s)",
              100.0 * fraction, 100.0 * worst_fraction, far, max_err, t)};
}

// 3: 2D-3D matches with 1 px noise on the query side and true surface points;
// outliers pair a uniform query point with a lifted random database pixel.
Outcome robust_estimation() {
  const auto t0 = clock_type::now();
  SceneParams sp;
  sp.num_db_views = 30;
  sp.num_queries = 100;
  const auto s = test::make_scenario(sp, 3);
  std::size_t good = 0, clamp_violations = 0, trials = 0;
  double worst_m = 0.0, worst_deg = 0.0;
  std::vector<double> rot;
  for (std::size_t q = 0; q < 100; ++q) {
    MatchParams mp;
    mp.n_inliers = 250;
    mp.n_outliers = 250;
    mp.noise_px = 1.0;
    mp.seed = q;
    const GeneratedMatches g = generate_matches(s.scene, q, mp, s.depths);
    std::vector<Match2D3D> matches;
    for (std::size_t i = 0; i < g.matches.size(); ++i) {
      const Match2D2D& m = g.matches[i];
      if (g.gt_points[i]) {
        matches.push_back({m.query_pt, *g.gt_points[i], {{m.db_image, m.db_pt}}});
        continue;
      }
      const DatabaseView& v = s.views[m.db_image];
      const auto d = lookup_depth(v.depth, m.db_pt);
      if (d) matches.push_back({m.query_pt, unproject(v.pose, v.intrinsics, m.db_pt, *d), {{m.db_image, m.db_pt}}});
    }
    RansacConfig cfg;
    cfg.inlier_px = 6.0;
    cfg.seed = q;
    ++trials;
    const auto r = loransac_pose(matches, s.scene.gt_queries[q].intrinsics, cfg);
    if (!r) continue;
    if (r->num_iterations < 10000 || r->num_iterations > 100000) ++clamp_violations;
    const PoseError e = pose_error(r->pose, g.gt_pose);
    worst_m = std::max(worst_m, e.position_m);
    worst_deg = std::max(worst_deg, e.rotation_deg);
    good += e.position_m <= 0.01 && e.rotation_deg <= 0.1;
  }
  const double t = elapsed(t0);
  return {good >= 99 && clamp_violations == 0 && t < 120.0,
          fmt("%zu/%zu trials within 0.01 m / 0.1 deg (need 99), worst %.4f m / %.4f deg, iteration clamp "
              "violations %zu, %.1f s (limit 120 s)",
              good, trials, worst_m, worst_deg, clamp_violations, t)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 4
Outcome merge_vs_individual() {
  const auto t0 = clock_type::now();
  SceneParams sp;
  sp.num_db_views = 30;
  sp.num_queries = 12;
  const auto s = test::make_scenario(sp, 4004);
  std::vector<double> individual, merged;
  std::size_t features = 0, groups_bad = 0;
  for (std::size_t q = 0; q < sp.num_queries && features < 1000; ++q) {
    MatchParams mp;
    mp.n_inliers = 100;
    mp.noise_px = 1.0;
    mp.min_views = 3;
    mp.max_views = 5;
    mp.seed = q;
    const GeneratedMatches g = generate_matches(s.scene, q, mp, s.depths);
    std::map<QueryKey, std::vector<std::size_t>> by_feature;
    for (std::size_t i = 0; i < g.matches.size(); ++i) by_feature[query_key(g.matches[i].query_pt)].push_back(i);
    for (const auto& [key, idx] : by_feature) {
      std::vector<Match2D3D> cand;
      for (std::size_t i : idx) {
        const Match2D2D& m = g.matches[i];
        const DatabaseView& v = s.views[m.db_image];
        const auto d = lookup_depth(v.depth, m.db_pt);
        if (d) cand.push_back({m.query_pt, unproject(v.pose, v.intrinsics, m.db_pt, *d), {{m.db_image, m.db_pt}}});
      }
      if (cand.size() < 3) continue;
      const Vec3 x = *g.gt_points[idx.front()];
      ++features;
      for (const auto& c : cand) individual.push_back((c.world_pt - x).norm());
      const auto out = merge_matches(cand, s.views, 6.0);
      if (out.size() != 1 && out.size() != cand.size()) ++groups_bad;
      for (const auto& o : out) merged.push_back((o.world_pt - x).norm());
      if (features == 1000) break;
    }
  }
  const double mi = median(individual), mm = median(merged);
  return {features >= 1000 && mm <= mi && groups_bad == 0,
          fmt("%zu features with >= 3 observations, median error merged %.4f m vs individual %.4f m, cardinality "
              "violations %zu, %.1f s",
              features, mm, mi, groups_bad, elapsed(t0))};
}

// 5
Outcome position_averaging() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(5005);
  const CameraIntrinsics k = test::pinhole(600, 800, 600);
  double sym_err = 0.0, single_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose pose = test::random_pose(rng);
    std::vector<Match2D3D> m;
    for (int i = 0; i < 30; ++i) {
      const Vec3 cam = test::random_vec(rng, -1, 1) + Vec3(0, 0, 6);
      m.push_back({*project_camera(k, cam), pose.to_world(cam), {{0, Vec2::Zero()}}});
    }
    sym_err = std::max(sym_err, (position_average(pose, m, k, 1e9, AveragingConfig::aachen()).center - pose.center).norm());

    const AveragingConfig avg = trial % 2 ? AveragingConfig::aachen() : AveragingConfig::twelve_scenes();
    std::uniform_int_distribution<int> step(-static_cast<int>(avg.d_vol / avg.d_step + 1e-9),
                                            static_cast<int>(avg.d_vol / avg.d_step + 1e-9));
    const Pose target(pose.rotation, pose.center + Vec3(step(rng), step(rng), step(rng)) * avg.d_step);
    const Vec3 x = target.to_world(Vec3(0.3, 0.1, 1.0) * 5.0);
    const std::vector<Match2D3D> one = {{*project(target, k, x), x, {{0, Vec2::Zero()}}}};
    single_err = std::max(single_err, (position_average(pose, one, k, 0.01, avg).center - target.center).norm());
  }
  std::size_t improved = 0, rotation_changed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto t = test::elongated_trial(5005 + seed);
    const Pose out = position_average(t.start, t.matches, t.k, 6.0, AveragingConfig::aachen());
    rotation_changed += !(out.rotation == t.start.rotation);
    improved += (out.center - t.gt.center).norm() < (t.start.center - t.gt.center).norm();
  }
  return {sym_err <= 1e-12 && single_err <= 1e-12 && improved >= 80 && rotation_changed == 0,
          fmt("symmetric grid |c'-c| %.1e m, single support |c'-p| %.1e m (tol 1e-12), improved %zu/100 (need 80), "
              "rotation changed %zu, %.2f s",
              sym_err, single_err, improved, rotation_changed, elapsed(t0))};
}

// 6
Outcome covisibility() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(6006);
  std::size_t wrong = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = test::random_covis_matches(rng, 1 + trial % 60, 1 + static_cast<ImageId>(trial % 30));
    if (!test::check_covis_partition(m, covis_components(m)).empty()) ++wrong;
  }
  SceneParams sp;
  sp.num_db_views = 20;
  sp.num_queries = 10;
  const auto s = test::make_scenario(sp, 6007);
  std::size_t differ = 0, runs = 0;
  for (std::size_t q = 0; q < 10; ++q) {
    MatchParams mp;
    mp.n_inliers = 100;
    mp.n_outliers = 50;
    mp.noise_px = 1.0;
    mp.seed = q;
    auto p = test::lifted_problem(s, q, mp);
    for (auto& m : p.matches) m.sources = {{0, m.sources.front().db_pt}};
    RansacConfig cfg;
    cfg.seed = q;
    const auto a = loransac_pose(p.matches, p.k, cfg);
    const auto b = estimate_with_covisibility(p.matches, p.k, cfg, true);
    ++runs;
    const bool same = a && b && a->pose.rotation == b->pose.rotation && a->pose.center == b->pose.center &&
                      a->inliers == b->inliers && a->msac_score == b->msac_score;
    differ += !same;
  }
  return {wrong == 0 && differ == 0,
          fmt("1000 random match sets, %zu partitions differ from brute-force closure; single component vs "
              "unfiltered: %zu/%zu not bit-identical, %.2f s",
              wrong, differ, runs, elapsed(t0))};
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + MESHLOC_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

// 7
Outcome end_to_end() {
  namespace fs = std::filesystem;
  const auto t0 = clock_type::now();
  test::TempDir dir("e2e");
  const fs::path bench = dir.path() / "bench";
  const fs::path log = dir.path() / "log.txt";
  const std::string synth = "synth --out \"" + bench.string() +
                            "\" --seed 7 --queries 50 --db-views 60 --inliers 200 --outliers 200 --noise 1 "
                            "--max-views 3 --query-k1 -0.02";
  const std::string cfg = " --config \"" + (bench / "config.txt").string() + "\"";
  if (run_cli(synth, log) != 0) return {false, "synth failed: " + io_detail::read_file(log)};
  if (run_cli("render" + cfg + " --render-style tricolor", log) != 0)
    return {false, "render failed: " + io_detail::read_file(log)};
  if (run_cli("localize" + cfg + " --threads 4", log) != 0)
    return {false, "localize failed: " + io_detail::read_file(log)};
  const fs::path gt = bench / ExportLayout::kGroundTruth;
  if (run_cli("evaluate --estimates \"" + (bench / "poses.txt").string() + "\" --gt \"" + gt.string() +
                  "\" --thresholds \"0.05,0.5;0.25,2\"",
              log) != 0)
    return {false, "evaluate failed: " + io_detail::read_file(log)};
  const std::string report = io_detail::read_file(log);
  EvalThresholds thr{{{0.05, 0.5}, {0.25, 2.0}}};
  const auto pct = evaluate_files(bench / "poses.txt", gt, thr);

  // Same seed, fresh directory, single thread: identical poses file.
  const fs::path again = dir.path() / "again";
  bool same = run_cli("synth --out \"" + again.string() +
                          "\" --seed 7 --queries 50 --db-views 60 --inliers 200 --outliers 200 --noise 1 "
                          "--max-views 3 --query-k1 -0.02",
                      log) == 0 &&
              run_cli("localize --config \"" + (again / "config.txt").string() + "\" --threads 1", log) == 0;
  same = same && io_detail::read_file(bench / "poses.txt") == io_detail::read_file(again / "poses.txt");
  const double t = elapsed(t0);
  std::string cli_line = report.substr(0, report.find('\n'));
  return {pct[0] >= 95.0 && pct[1] >= 100.0 && same && t < 300.0,
          fmt("50 queries: %.1f%% within 0.05 m / 0.5 deg (need 95), %.1f%% within 0.25 m / 2 deg (need 100), "
              "deterministic rerun %s, %.1f s (limit 300 s); cli: %s",
              pct[0], pct[1], same ? "yes" : "no", t, cli_line.c_str())};
}

// 8
Outcome formats() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(8008);
  std::vector<Pose> poses;
  std::vector<PoseRecord> records;
  for (int i = 0; i < 1000; ++i) {
    poses.push_back(test::random_pose(rng, 100.0));
    records.push_back(PoseRecord::from_pose("img_" + std::to_string(i), poses.back()));
  }
  test::TempDir dir("formats");
  write_poses(dir.path() / "poses.txt", records);
  const auto back = read_poses(dir.path() / "poses.txt");
  const bool exact = back == records;
  double worst = 0.0;
  for (std::size_t i = 0; i < back.size(); ++i) {
    const Mat3 r = rotation_from_quaternion(back[i].qvec[0], back[i].qvec[1], back[i].qvec[2], back[i].qvec[3]);
    worst = std::max(worst, (back[i].tvec + r * poses[i].center).norm() / (1.0 + poses[i].center.norm()));
  }
  return {exact && back.size() == 1000 && worst <= 1e-12,
          fmt("1000 poses reread %s, max |t + R c| / (1 + |c|) %.1e (tol 1e-12), %.2f s",
              exact ? "exactly" : "WITH DIFFERENCES", worst, elapsed(t0))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"P3P construct-and-recover", p3p_recovery},
      {"rasterizer oracle equivalence", raster_oracle},
      {"robust estimation", robust_estimation},
      {"merge vs individual", merge_vs_individual},
      {"position averaging", position_averaging},
      {"covisibility partition", covisibility},
      {"end-to-end CLI", end_to_end},
      {"format fidelity", formats},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
