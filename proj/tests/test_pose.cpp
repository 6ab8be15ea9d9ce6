//==============================================================================
// Copyright 2026 The reloc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================

#include "test_util.hpp"

namespace reloc
{
namespace
{

CameraIntrinsics cam() { return CameraIntrinsics{}; }

/// Map point whose projection under `map_to_cam` is `px` at the given depth.
Vec3 unproject(const Pose& map_to_cam, const Vec2& px, double depth, const CameraIntrinsics& k)
{
  const Vec3 pc((px.x() - k.cx) / k.fx * depth, (px.y() - k.cy) / k.fy * depth, depth);
  return map_to_cam.inverse() * pc;
}

/// Exact correspondences spread over the image, depths in [2, 30] m.
std::vector<Correspondence2D3D> exact_corrs(const Pose& map_to_cam, std::size_t n, std::mt19937_64& rng)
{
  const auto k = cam();
  std::uniform_real_distribution<double> ux(0, k.width), uy(0, k.height), ud(2, 30);
  std::vector<Correspondence2D3D> out;
  for (std::size_t i = 0; i < n; ++i)
  {
    Correspondence2D3D c;
    c.query_px = Vec2(ux(rng), uy(rng));
    c.point_xyz = unproject(map_to_cam, c.query_px, ud(rng), k);
    c.point_id = static_cast<std::int64_t>(i);
    out.push_back(c);
  }
  return out;
}

double rot_diff(const Pose& a, const Pose& b) { return rotation_angle(a.rotation.transpose() * b.rotation); }
double trans_diff(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

bool contains_pose(const std::vector<Pose>& sols, const Pose& gt, double tol)
{
  return std::any_of(sols.begin(), sols.end(),
                     [&](const Pose& s) { return rot_diff(s, gt) < tol && trans_diff(s, gt) < tol; });
}

/// Smallest interior angle of the triangle, in degrees.
double min_angle_deg(const Vec3& a, const Vec3& b, const Vec3& c)
{
  auto ang = [](const Vec3& p, const Vec3& q, const Vec3& r) {
    return rad2deg(std::acos(std::clamp((q - p).normalized().dot((r - p).normalized()), -1.0, 1.0)));
  };
  return std::min({ang(a, b, c), ang(b, c, a), ang(c, a, b)});
}

TEST(P3P, ExactRecovery)
{
  std::mt19937_64 rng(1);
  const Pose gt = test::random_pose(rng, 5.0);
  const auto c = exact_corrs(gt, 3, rng);
  const auto sols = p3p_solve(std::span<const Correspondence2D3D, 3>(c.data(), 3), cam());
  ASSERT_FALSE(sols.empty());
  EXPECT_LE(sols.size(), 4u);
  EXPECT_TRUE(contains_pose(sols, gt, 1e-8));
}

TEST(P3P, CollinearAndCoincidentGiveNothing)
{
  const std::array<Vec2, 3> px = {Vec2(100, 100), Vec2(200, 200), Vec2(300, 300)};
  const std::array<Vec3, 3> line = {Vec3(0, 0, 5), Vec3(1, 1, 5), Vec3(2, 2, 5)};
  EXPECT_TRUE(p3p_solve(std::span<const Vec2, 3>(px), std::span<const Vec3, 3>(line), cam()).empty());
  const std::array<Vec3, 3> same = {Vec3(0, 0, 5), Vec3(0, 0, 5), Vec3(1, 0, 5)};
  EXPECT_TRUE(p3p_solve(std::span<const Vec2, 3>(px), std::span<const Vec3, 3>(same), cam()).empty());
}

TEST(P3P, RandomTriplesRecoverGroundTruth)
{
  std::mt19937_64 rng(2);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial)
  {
    const Pose gt = test::random_pose(rng, 20.0);
    const auto c = exact_corrs(gt, 3, rng);
    if (min_angle_deg(c[0].point_xyz, c[1].point_xyz, c[2].point_xyz) < 2.0)
      continue;
    ++checked;
    const auto sols = p3p_solve(std::span<const Correspondence2D3D, 3>(c.data(), 3), cam());
    EXPECT_TRUE(contains_pose(sols, gt, 1e-6)) << "trial " << trial;
    for (const auto& s : sols)
      for (const auto& x : c)
        EXPECT_LE(reprojection_error(s, x.point_xyz, x.query_px, cam()), 1e-6);
  }
  EXPECT_GT(checked, 950);
}

TEST(Refine, JacobianMatchesFiniteDifferences)
{
  std::mt19937_64 rng(3);
  const auto k = cam();
  for (int trial = 0; trial < 100; ++trial)
  {
    const Pose pose = test::random_pose(rng, 5.0);
    const auto c = exact_corrs(pose, 1, rng).front();
    const auto j = reprojection_jacobian(pose, c.point_xyz, k);
    Eigen::Matrix<double, 2, 6> fd;
    const double h = 1e-6;
    for (int d = 0; d < 6; ++d)
    {
      Vec6 e = Vec6::Zero();
      e[d] = h;
      const Vec2 plus = *project_pinhole(apply_increment(pose, e) * c.point_xyz, k);
      const Vec2 minus = *project_pinhole(apply_increment(pose, -e) * c.point_xyz, k);
      fd.col(d) = (plus - minus) / (2 * h);
    }
    EXPECT_LT((j - fd).norm() / j.norm(), 1e-5) << "trial " << trial;
  }
}

TEST(Refine, GroundTruthIsStationary)
{
  std::mt19937_64 rng(4);
  const Pose gt = test::random_pose(rng, 5.0);
  const auto c = exact_corrs(gt, 40, rng);
  const Pose out = refine_pose(gt, c, cam(), RansacConfig{});
  EXPECT_LT(rot_diff(out, gt), 1e-12);
  EXPECT_LT(trans_diff(out, gt), 1e-12);
}

TEST(Refine, ConvergesFromPerturbedInit)
{
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial)
  {
    const Pose gt = test::random_pose(rng, 5.0);
    const auto c = exact_corrs(gt, 40, rng);
    Vec6 d;
    d.head<3>() = Vec3(1, -1, 0.5).normalized() * deg2rad(1.0);
    d.tail<3>() = Vec3(0.3, 0.5, -1).normalized() * 0.1;
    const auto tr = refine_pose_traced(apply_increment(gt, d), c, cam(), RansacConfig{});
    EXPECT_LT(rot_diff(tr.pose, gt), 1e-8);
    EXPECT_LT(trans_diff(tr.pose, gt), 1e-8);
    for (std::size_t i = 1; i < tr.accepted_costs.size(); ++i)
      EXPECT_LE(tr.accepted_costs[i], tr.accepted_costs[i - 1]);
  }
}

TEST(Refine, ObjectiveNonIncreasingWithOutliers)
{
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ux(0, 960), uy(0, 480);
  std::normal_distribution<double> noise(0, 1);
  for (int trial = 0; trial < 50; ++trial)
  {
    const Pose gt = test::random_pose(rng, 5.0);
    auto c = exact_corrs(gt, 30, rng);
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i].query_px = i % 5 == 0 ? Vec2(ux(rng), uy(rng)) : Vec2(c[i].query_px + Vec2(noise(rng), noise(rng)));
    std::uniform_real_distribution<double> small(-0.02, 0.02);
    Vec6 d;
    for (int i = 0; i < 6; ++i)
      d[i] = small(rng);
    const auto tr = refine_pose_traced(apply_increment(gt, d), c, cam(), RansacConfig{});
    ASSERT_FALSE(tr.accepted_costs.empty());
    for (std::size_t i = 1; i < tr.accepted_costs.size(); ++i)
      EXPECT_LE(tr.accepted_costs[i], tr.accepted_costs[i - 1]);
    EXPECT_EQ(tr.accepted_costs.back(), robust_objective(tr.pose, c, cam(), 2.0));
  }
}

TEST(Huber, Shape)
{
  EXPECT_EQ(huber_cost(1.0, 2.0), 1.0);
  EXPECT_EQ(huber_cost(2.0, 2.0), 4.0);
  EXPECT_EQ(huber_cost(3.0, 2.0), 8.0);
  EXPECT_EQ(huber_cost(0.0, 2.0), 0.0);
}

TEST(PnpRansac, ExactCorrespondences)
{
  std::mt19937_64 rng(7);
  const Pose gt = test::random_pose(rng, 10.0);
  const auto c = exact_corrs(gt, 50, rng);
  const auto r = pnp_ransac(c, cam(), RansacConfig{});
  ASSERT_EQ(r.status, RelocStatus::OK) << r.reason;
  EXPECT_LT(rot_diff(r.pose, gt), 1e-6);
  EXPECT_LT(trans_diff(r.pose, gt), 1e-6);
  EXPECT_EQ(r.inlier_count, 50);
  EXPECT_EQ(r.inlier_ratio, 1.0);
}

TEST(PnpRansac, TooFewCorrespondences)
{
  std::mt19937_64 rng(8);
  const auto c = exact_corrs(Pose{}, 3, rng);
  const auto r = pnp_ransac(c, cam(), RansacConfig{});
  EXPECT_EQ(r.status, RelocStatus::FAILED);
  EXPECT_EQ(r.reason, "too few correspondences");
  EXPECT_EQ(pnp_ransac({}, cam(), RansacConfig{}).reason, "too few correspondences");
}

TEST(PnpRansac, DegenerateInputFailsCleanly)
{
  std::vector<Correspondence2D3D> c(10);
  for (std::size_t i = 0; i < c.size(); ++i)
  {
    c[i].point_xyz = Vec3(static_cast<double>(i), 0, 5);
    c[i].query_px = Vec2(480 + 10.0 * i, 240);
  }
  const auto r = pnp_ransac(c, cam(), RansacConfig{});
  EXPECT_EQ(r.status, RelocStatus::FAILED);
  EXPECT_FALSE(r.reason.empty());
}

/// 60% inliers with 1 px noise, 40% uniform outliers.
std::vector<Correspondence2D3D> contaminated(const Pose& gt, std::mt19937_64& rng)
{
  auto c = exact_corrs(gt, 100, rng);
  std::uniform_real_distribution<double> ux(0, 960), uy(0, 480);
  std::normal_distribution<double> noise(0, 1);
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i].query_px = i < 60 ? Vec2(c[i].query_px + Vec2(noise(rng), noise(rng))) : Vec2(ux(rng), uy(rng));
  std::shuffle(c.begin(), c.end(), rng);
  return c;
}

TEST(PnpRansac, ContaminatedMonteCarlo)
{
  std::mt19937_64 rng(9);
  int good = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t)
  {
    const Pose gt = test::random_pose(rng, 10.0);
    const auto c = contaminated(gt, rng);
    RansacConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto r = pnp_ransac(c, cam(), cfg);
    good += r.status == RelocStatus::OK && trans_diff(r.pose, gt) < 0.05 && rad2deg(rot_diff(r.pose, gt)) < 0.2;
  }
  EXPECT_GE(good, 38);
}

TEST(PnpRansac, DeterministicAndSelfConsistent)
{
  std::mt19937_64 rng(10);
  const Pose gt = test::random_pose(rng, 10.0);
  const auto c = contaminated(gt, rng);
  RansacConfig cfg;
  cfg.seed = 42;
  const auto a = pnp_ransac(c, cam(), cfg);
  const auto b = pnp_ransac(c, cam(), cfg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.status, RelocStatus::OK);
  ASSERT_EQ(a.inliers.size(), c.size());
  int count = 0;
  double err = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
  {
    const double e = reprojection_error(a.pose, c[i].point_xyz, c[i].query_px, cam());
    const bool in = e < cfg.inlier_thresh_px;
    EXPECT_EQ(a.inliers[i], in);
    count += in;
    err += in ? e : 0.0;
  }
  EXPECT_EQ(a.inlier_count, count);
  EXPECT_DOUBLE_EQ(a.inlier_ratio, count / 100.0);
  EXPECT_NEAR(a.mean_reproj_err_px, err / count, 1e-9);
}

TEST(RansacConfig, Validation)
{
  RansacConfig c;
  c.confidence = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = RansacConfig{};
  c.min_inliers = 3;
  EXPECT_THROW(c.validate(), Error);
}

} // namespace
} // namespace reloc
