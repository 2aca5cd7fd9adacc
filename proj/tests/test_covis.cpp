#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "covis_oracle.hpp"
#include "meshloc/covis.hpp"
#include "scenario.hpp"
#include "test_util.hpp"

using namespace meshloc;

namespace {

Match2D3D feature(double x, std::initializer_list<ImageId> images) {
  Match2D3D m;
  m.query_pt = Vec2(x, 0.5);
  for (ImageId i : images) m.sources.push_back({i, Vec2::Zero()});
  return m;
}

const test::Scenario& room() {
  static const test::Scenario s = [] {
    SceneParams sp;
    sp.num_db_views = 12;
    sp.num_queries = 10;
    return test::make_scenario(sp, 21);
  }();
  return s;
}

}  // namespace

TEST(CovisComponents, SharedFeatureLinksImages) {
  // q1 -> A, q1 -> B, q2 -> C
  const std::vector<Match2D3D> m = {feature(1.5, {0}), feature(1.5, {1}), feature(2.5, {2})};
  const auto c = covis_components(m);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(c[1], (std::vector<std::size_t>{2}));
}

TEST(CovisComponents, SingleImageIsOneComponent) {
  std::vector<Match2D3D> m;
  for (int i = 0; i < 10; ++i) m.push_back(feature(i + 0.5, {4}));
  const auto c = covis_components(m);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].size(), 10u);
}

TEST(CovisComponents, ChainIsTransitive) {
  // q1 -> {A, B}, q2 -> {B, C}
  const std::vector<Match2D3D> m = {feature(1.5, {0}), feature(1.5, {1}), feature(2.5, {1}), feature(2.5, {2})};
  EXPECT_EQ(covis_components(m).size(), 1u);
}

TEST(CovisComponents, MultiSourceMatchJoinsItsImages) {
  const std::vector<Match2D3D> m = {feature(1.5, {0, 3}), feature(2.5, {3}), feature(3.5, {5})};
  const auto c = covis_components(m);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (std::vector<std::size_t>{0, 1}));
}

TEST(CovisComponents, EmptyAndSourceless) {
  EXPECT_TRUE(covis_components(std::vector<Match2D3D>{}).empty());
  Match2D3D bad;
  EXPECT_THROW(covis_components(std::vector<Match2D3D>{bad}), Error);
}

TEST(CovisComponents, MatchesBruteForceClosure) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t features = 1 + trial % 40;
    const ImageId images = 1 + static_cast<ImageId>(trial % 25);
    const auto m = test::random_covis_matches(rng, features, images);
    const auto c = covis_components(m);
    ASSERT_EQ(test::check_covis_partition(m, c), "") << trial;
    // Ordered by first index, input order inside.
    for (std::size_t k = 0; k < c.size(); ++k) {
      EXPECT_TRUE(std::is_sorted(c[k].begin(), c[k].end()));
      if (k > 0) {
        EXPECT_LT(c[k - 1].front(), c[k].front());
      }
    }
  }
}

TEST(EstimateWithCovisibility, SingleComponentMatchesUnfiltered) {
  for (std::size_t q = 0; q < 3; ++q) {
    MatchParams mp;
    mp.n_inliers = 80;
    mp.n_outliers = 40;
    mp.noise_px = 1.0;
    mp.seed = q;
    auto p = test::lifted_problem(room(), q, mp);
    // One database image for everything.
    for (auto& m : p.matches) m.sources = {{0, Vec2::Zero()}};
    RansacConfig cfg;
    cfg.seed = 17 + q;
    const auto plain = loransac_pose(p.matches, p.k, cfg);
    const auto filtered = estimate_with_covisibility(p.matches, p.k, cfg, true);
    const auto off = estimate_with_covisibility(p.matches, p.k, cfg, false);
    ASSERT_TRUE(plain && filtered && off);
    for (const auto* r : {&*filtered, &*off}) {
      EXPECT_EQ(r->pose.rotation, plain->pose.rotation);
      EXPECT_EQ(r->pose.center, plain->pose.center);
      EXPECT_EQ(r->inliers, plain->inliers);
      EXPECT_EQ(r->msac_score, plain->msac_score);
      EXPECT_EQ(r->num_iterations, plain->num_iterations);
    }
  }
}

TEST(EstimateWithCovisibility, PicksConsistentCluster) {
  MatchParams mp;
  mp.n_inliers = 40;
  mp.seed = 5;
  const auto good = test::lifted_problem(room(), 2, mp);
  // Second cluster: more matches, random geometry, separate images.
  std::mt19937_64 rng(8);
  std::vector<Match2D3D> matches;
  for (const auto& m : good.matches) matches.push_back({m.query_pt, m.world_pt, {{0, Vec2::Zero()}}});
  std::uniform_real_distribution<double> ux(0.0, 800.0), uy(0.0, 600.0);
  for (int i = 0; i < 60; ++i)
    matches.push_back({Vec2(ux(rng), uy(rng)), test::random_vec(rng, -3, 3), {{static_cast<ImageId>(1 + i % 2), Vec2::Zero()}}});
  std::shuffle(matches.begin(), matches.end(), rng);

  RansacConfig cfg;
  cfg.inlier_px = 6.0;
  const auto r = estimate_with_covisibility(matches, good.k, cfg, true);
  ASSERT_TRUE(r);
  const PoseError e = pose_error(r->pose, good.gt);
  EXPECT_LT(e.position_m, 0.05);
  EXPECT_LT(e.rotation_deg, 0.5);
  for (std::size_t i : r->inliers) EXPECT_EQ(matches[i].sources.front().db_image, 0u);
  const auto comps = covis_components(matches);
  EXPECT_EQ(matches[comps[r->component_id].front()].sources.front().db_image, 0u);
}

TEST(EstimateWithCovisibility, AllComponentsTooSmall) {
  std::vector<Match2D3D> m;
  for (int i = 0; i < 9; ++i) m.push_back(feature(i + 0.5, {static_cast<ImageId>(i / 3)}));
  for (std::size_t i = 0; i < m.size(); ++i) m[i].world_pt = Vec3(0.1 * static_cast<double>(i), 0.0, 5.0);
  EXPECT_FALSE(estimate_with_covisibility(m, test::pinhole(600, 800, 600), RansacConfig{}, true));
}
