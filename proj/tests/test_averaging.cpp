#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "averaging_scene.hpp"
#include "meshloc/averaging.hpp"
#include "test_util.hpp"

using namespace meshloc;

namespace {

std::vector<Match2D3D> cloud(std::mt19937_64& rng, const Pose& pose, const CameraIntrinsics& k, int n) {
  std::vector<Match2D3D> out;
  for (int i = 0; i < n; ++i) {
    const Vec3 cam = test::random_vec(rng, -1, 1) + Vec3(0, 0, 6);
    out.push_back({*project_camera(k, cam), pose.to_world(cam), {{0, Vec2::Zero()}}});
  }
  return out;
}

}  // namespace

TEST(PositionAverage, SymmetricSupportKeepsCenter) {
  std::mt19937_64 rng(1);
  const auto k = test::pinhole(600, 800, 600);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose pose = test::random_pose(rng);
    const auto m = cloud(rng, pose, k, 30);
    // Every grid center keeps every match in front and within the threshold.
    const Pose out = position_average(pose, m, k, 1e9, AveragingConfig::aachen());
    EXPECT_EQ(out.rotation, pose.rotation);
    EXPECT_LE((out.center - pose.center).norm(), 1e-12);
  }
}

TEST(PositionAverage, SingleSupportedGridPoint) {
  const auto k = test::pinhole(600, 800, 600);
  const Pose pose(Mat3::Identity(), Vec3(0.2, -0.1, 0.3));
  const AveragingConfig avg = AveragingConfig::aachen();
  const Vec3 offset = Vec3(1, -2, 3) * avg.d_step;
  const Pose target(pose.rotation, pose.center + offset);
  const Vec3 x = target.to_world(Vec3(0.3 * 5.0, 0.1 * 5.0, 5.0));
  const std::vector<Match2D3D> m = {{*project(target, k, x), x, {{0, Vec2::Zero()}}}};
  const Pose out = position_average(pose, m, k, 0.5, avg);
  EXPECT_LE((out.center - target.center).norm(), 1e-12);
  EXPECT_EQ(out.rotation, pose.rotation);
}

TEST(PositionAverage, NoSupportReturnsInput) {
  const auto k = test::pinhole(600, 800, 600);
  const Pose pose(Mat3::Identity(), Vec3::Zero());
  const std::vector<Match2D3D> m = {{Vec2(10, 10), Vec3(0, 0, -5), {{0, Vec2::Zero()}}}};
  const Pose out = position_average(pose, m, k, 6.0, AveragingConfig::aachen());
  EXPECT_EQ(out.center, pose.center);
  EXPECT_EQ(out.rotation, pose.rotation);
  EXPECT_EQ(position_average(pose, {}, k, 6.0, AveragingConfig::aachen()).center, pose.center);
}

TEST(PositionAverage, GridBoundaryIncluded) {
  // d_vol a multiple of d_step: the outermost layer at exactly d_vol counts.
  const auto k = test::pinhole(600, 800, 600);
  const Pose pose(Mat3::Identity(), Vec3::Zero());
  const AveragingConfig avg{0.5, 0.25};
  const Pose target(pose.rotation, Vec3(0.5, 0.5, -0.5));
  const Vec3 x = target.to_world(Vec3(0.2, -0.3, 4.0));
  const std::vector<Match2D3D> m = {{*project(target, k, x), x, {{0, Vec2::Zero()}}}};
  EXPECT_LE((position_average(pose, m, k, 0.5, avg).center - target.center).norm(), 1e-12);
}

TEST(PositionAverage, RotationUnchangedAndShiftBounded) {
  std::mt19937_64 rng(2);
  const auto k = test::pinhole(600, 800, 600);
  for (int trial = 0; trial < 30; ++trial) {
    const Pose gt = test::random_pose(rng);
    const auto m = cloud(rng, gt, k, 40);
    const Pose start(gt.rotation, gt.center + test::random_vec(rng, -0.5, 0.5));
    const AveragingConfig avg = trial % 2 ? AveragingConfig::aachen() : AveragingConfig::twelve_scenes();
    const Pose out = position_average(start, m, k, 12.0, avg);
    EXPECT_EQ(out.rotation, start.rotation);
    EXPECT_LE((out.center - start.center).norm(), std::sqrt(3.0) * avg.d_vol + 1e-12);
  }
}

TEST(PositionAverage, ImprovesWeakAxisError) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = test::elongated_trial(seed);
    const Pose out = position_average(t.start, t.matches, t.k, 6.0, AveragingConfig::aachen());
    EXPECT_EQ(out.rotation, t.start.rotation);
    if ((out.center - t.gt.center).norm() < (t.start.center - t.gt.center).norm()) ++improved;
  }
  EXPECT_GE(improved, 16);
}

TEST(PositionAverage, InvalidConfig) {
  EXPECT_THROW((AveragingConfig{1.0, 0.0}.validate()), Error);
  EXPECT_THROW((AveragingConfig{0.1, 0.5}.validate()), Error);
  EXPECT_NO_THROW(AveragingConfig::twelve_scenes().validate());
}
