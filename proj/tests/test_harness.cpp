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

SceneConfig single_wall(double density)
{
  SceneConfig s;
  s.extent = Vec3(10, 4, 3);
  s.wall_count = 1;
  s.ground = false;
  s.points_per_m2 = density;
  return s;
}

TEST(Scene, DensityGivesExpectedCount)
{
  const auto cloud = generate_scene(single_wall(100));
  EXPECT_EQ(cloud.size(), 3000u);
  for (const auto& p : cloud.points)
  {
    EXPECT_EQ(p.xyz.y(), 0.f);
    EXPECT_GE(p.xyz.x(), 0.f);
    EXPECT_LE(p.xyz.x(), 10.f);
    EXPECT_GE(p.xyz.z(), 0.f);
    EXPECT_LE(p.xyz.z(), 3.f);
    EXPECT_FALSE(p.intensity_eq.has_value());
  }
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_EQ(cloud.points[i].id, static_cast<std::int64_t>(i));
}

TEST(Scene, SeededDeterminism)
{
  SceneConfig s;
  s.seed = 7;
  s.points_per_m2 = 20;
  const auto a = generate_scene(s);
  EXPECT_EQ(a, generate_scene(s));
  s.seed = 8;
  EXPECT_NE(a, generate_scene(s));
}

TEST(Scene, CheckerTextureIsBimodal)
{
  auto s = single_wall(400);
  s.texture = Texture::Checker;
  s.texture_scale = 0.5;
  std::map<float, int> hist;
  for (const auto& p : generate_scene(s).points)
    ++hist[p.intensity_raw];
  ASSERT_EQ(hist.size(), 2u);
  EXPECT_EQ(hist.begin()->first, 20.f);
  EXPECT_EQ(hist.rbegin()->first, 80.f);
  const double frac = hist.begin()->second / 12000.0;
  EXPECT_NEAR(frac, 0.5, 0.05);
}

TEST(Scene, InvalidConfigs)
{
  auto s = single_wall(100);
  s.wall_count = 0;
  EXPECT_THROW(generate_scene(s), Error);
  s = single_wall(0);
  EXPECT_THROW(generate_scene(s), Error);
  EXPECT_THROW(parse_texture("plaid"), Error);
  EXPECT_EQ(parse_texture(texture_name(Texture::Stripes)), Texture::Stripes);
}

TEST(Scene, WallsStayInsideExtent)
{
  SceneConfig s;
  s.points_per_m2 = 10;
  const auto cloud = generate_scene(s);
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a)
    {
      EXPECT_GE(p.xyz[a], -1e-4f);
      EXPECT_LE(p.xyz[a], static_cast<float>(s.extent[a]) + 1e-4f);
    }
}

TEST(Trajectory, StraightSpacing)
{
  SceneConfig s;
  const auto t = generate_trajectory(s, 20, 1.5);
  ASSERT_EQ(t.size(), 20u);
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    EXPECT_EQ(t[i].index, static_cast<std::int64_t>(i));
    EXPECT_TRUE(t[i].pose.is_valid());
    EXPECT_DOUBLE_EQ(t[i].pose.translation.z(), 1.5);
    // Optical axis (+z in the sensor frame) along +x.
    EXPECT_NEAR((t[i].pose.rotation * Vec3::UnitZ() - Vec3::UnitX()).norm(), 0.0, 1e-12);
    if (i > 0)
    {
      EXPECT_NEAR((t[i].pose.translation - t[i - 1].pose.translation).norm(), 1.5, 1e-12);
    }
  }
  EXPECT_THROW(generate_trajectory(s, 100, 1.0), Error);
  EXPECT_THROW(generate_trajectory(s, 0, 1.0), Error);
}

TEST(Trajectory, LoopClosesWithEqualChords)
{
  SceneConfig s;
  s.extent = Vec3(30, 30, 4);
  const auto t = generate_trajectory(s, 24, 1.0, PathShape::Loop);
  ASSERT_EQ(t.size(), 24u);
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    const auto& next = t[(i + 1) % t.size()].pose;
    EXPECT_NEAR((next.translation - t[i].pose.translation).norm(), 1.0, 1e-9);
    EXPECT_TRUE(t[i].pose.is_valid());
    // Heading tangent to the circle.
    const Vec3 heading = t[i].pose.rotation * Vec3::UnitZ();
    EXPECT_NEAR(heading.dot((next.translation - t[i].pose.translation).normalized()), 1.0, 0.01);
  }
  EXPECT_EQ(parse_path_shape("loop"), PathShape::Loop);
  EXPECT_THROW(parse_path_shape("spiral"), Error);
}

TEST(Queries, JitterIsClampedAndSeeded)
{
  QueryRenderConfig cfg;
  cfg.trans_sigma_m = 10;
  cfg.rot_sigma_deg = 90;
  const Pose base(look_along(Vec3::UnitX()), Vec3(1, 2, 3));
  for (std::uint64_t seed = 0; seed < 100; ++seed)
  {
    const Pose j = jitter_pose(base, cfg, seed);
    EXPECT_LE((j.translation - base.translation).norm(), cfg.trans_max_m + 1e-12);
    EXPECT_LE(rad2deg(rotation_angle(base.rotation.transpose() * j.rotation)), cfg.rot_max_deg + 1e-9);
    EXPECT_EQ(j, jitter_pose(base, cfg, seed));
  }
}

TEST(Queries, RenderShowsTheWallAndFailsWhenEmpty)
{
  // Wall in the plane x = 5, facing a camera at the origin looking along +x.
  std::vector<Vec3> pts;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j)
      pts.emplace_back(5, 0.1 * i, 0.1 * j);
  const auto cloud = test::make_cloud(pts, 100);
  CameraIntrinsics k{80, 80, 80, 40, 160, 80};
  QueryRenderConfig cfg;
  const Pose facing(look_along(Vec3::UnitX()), Vec3::Zero());
  const auto img = render_pinhole(cloud, facing, k, cfg);
  EXPECT_EQ(img.at(80, 40), 140); // 1.3 * 100 + 10
  EXPECT_EQ(img.at(0, 0), 0);
  const Pose away(look_along(-Vec3::UnitX()), Vec3::Zero());
  try
  {
    render_query(cloud, away, k, cfg, 1);
    FAIL() << "expected an error";
  }
  catch (const Error& e)
  {
    EXPECT_STREQ(e.what(), "empty render");
  }
  PointCloud raw = test::make_cloud({Vec3(5, 0, 0)});
  raw.points[0].intensity_eq.reset();
  EXPECT_THROW(render_pinhole(raw, facing, k, cfg), Error);
}

DatasetConfig tiny_dataset()
{
  DatasetConfig d;
  d.scene.extent = Vec3(12, 6, 3);
  d.scene.wall_count = 6;
  d.scene.points_per_m2 = 40;
  d.scene.seed = 3;
  d.n_poses = 6;
  d.n_queries = 3;
  d.intrinsics = CameraIntrinsics{80, 80, 80, 40, 160, 80};
  return d;
}

TEST(Dataset, DeterministicAndLossless)
{
  const auto ds = generate_dataset(tiny_dataset());
  const auto again = generate_dataset(tiny_dataset());
  EXPECT_EQ(ds.cloud, again.cloud);
  EXPECT_EQ(ds.trajectory, again.trajectory);
  EXPECT_EQ(ds.gt, again.gt);
  EXPECT_EQ(ds.queries, again.queries);
  ASSERT_EQ(ds.queries.size(), 3u);
  EXPECT_EQ(ds.queries[0].width, 160);

  test::TempDir dir("dataset");
  save_dataset(ds, dir.path());
  for (const char* f : {"map.ply", "traj.txt", "gt.txt", "intrinsics.cfg", "queries/000000.pgm"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.cloud, ds.cloud);
  EXPECT_EQ(back.trajectory, ds.trajectory);
  EXPECT_EQ(back.gt, ds.gt);
  EXPECT_EQ(back.intrinsics, ds.intrinsics);
  EXPECT_EQ(back.queries, ds.queries);

  // A second save of the reloaded dataset writes identical files.
  test::TempDir dir2("dataset2");
  save_dataset(back, dir2.path());
  for (const char* f : {"map.ply", "traj.txt", "gt.txt", "intrinsics.cfg", "queries/000002.pgm"})
  {
    std::ifstream a(dir / f, std::ios::binary), b(dir2 / f, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb) << f;
  }
}

} // namespace
} // namespace reloc
