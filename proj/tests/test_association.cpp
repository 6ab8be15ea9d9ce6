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

/// Feature sets and matches pairing query keypoint i with map keypoint i.
struct Paired
{
  LocalFeatureSet q, m;
  MatchSet matches;
  void add(double qx, double qy, double mx, double my)
  {
    const int i = static_cast<int>(q.keypoints.size());
    q.keypoints.push_back({static_cast<float>(qx), static_cast<float>(qy), 1.f});
    m.keypoints.push_back({static_cast<float>(mx), static_cast<float>(my), 1.f});
    matches.push_back({i, i, 0.9});
  }
};

TEST(ClusterMatches, KeepsDenseGroupAndDropsStragglers)
{
  Paired p;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 10; ++i)
    p.add(100 + u(rng), 100 + u(rng), 200 + u(rng), 50 + u(rng));
  p.add(500, 400, 900, 200);
  p.add(20, 450, 10, 10);
  AssociationConfig cfg;
  const auto c = cluster_matches(p.matches, p.q, p.m, 640, 480, 1024, 256, cfg);
  ASSERT_TRUE(c.has_value());
  ASSERT_EQ(c->matches.size(), 10u);
  for (const auto& mt : c->matches)
  {
    EXPECT_LT(mt.query_idx, 10);
    const auto& qk = p.q.keypoints[mt.query_idx];
    const auto& mk = p.m.keypoints[mt.map_idx];
    EXPECT_TRUE(c->query_box.contains(qk.x, qk.y));
    EXPECT_TRUE(c->map_box.contains(mk.x, mk.y));
  }
  EXPECT_FALSE(c->query_box.contains(500, 400));
  EXPECT_FALSE(c->query_box.contains(20, 450));
  EXPECT_LE(c->query_box.width(), 60);
  EXPECT_GE(c->query_box.x_min, 0);
  EXPECT_LE(c->map_box.x_max, 1024);
}

TEST(ClusterMatches, SmallClusterRejected)
{
  Paired p;
  for (int i = 0; i < 5; ++i)
    p.add(100 + i, 100, 200 + i, 50);
  AssociationConfig cfg;
  EXPECT_FALSE(cluster_matches(p.matches, p.q, p.m, 640, 480, 1024, 256, cfg).has_value());
  EXPECT_FALSE(cluster_matches({}, p.q, p.m, 640, 480, 1024, 256, cfg).has_value());
  cfg.min_cluster_matches = 5;
  EXPECT_TRUE(cluster_matches(p.matches, p.q, p.m, 640, 480, 1024, 256, cfg).has_value());
}

TEST(ClusterMatches, DegenerateHullGetsMinimumBox)
{
  Paired p;
  for (int i = 0; i < 8; ++i)
    p.add(300, 200, 0, 0);
  AssociationConfig cfg;
  const auto c = cluster_matches(p.matches, p.q, p.m, 640, 480, 1024, 256, cfg);
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->query_box.width(), 32);
  EXPECT_EQ(c->query_box.height(), 32);
  EXPECT_TRUE(c->query_box.contains(300, 200));
  // Clamped against the image corner.
  EXPECT_EQ(c->map_box, (BoundingBox{0, 0, 32, 32}));
}

TEST(ClusterMatches, BoxesStayInsideImages)
{
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(0, 99), uy(0, 59);
  AssociationConfig cfg;
  cfg.match_cluster_eps = 200;
  cfg.min_cluster_matches = 1;
  cfg.match_cluster_min_pts = 1;
  for (int t = 0; t < 200; ++t)
  {
    Paired p;
    for (int i = 0; i < 6; ++i)
      p.add(ux(rng), uy(rng), ux(rng), uy(rng));
    const auto c = cluster_matches(p.matches, p.q, p.m, 100, 60, 100, 60, cfg);
    ASSERT_TRUE(c.has_value());
    for (const auto& b : {c->query_box, c->map_box})
    {
      EXPECT_GE(b.x_min, 0);
      EXPECT_GE(b.y_min, 0);
      EXPECT_LE(b.x_max, 100);
      EXPECT_LE(b.y_max, 60);
      EXPECT_GE(b.width(), 32);
      EXPECT_GE(b.height(), 32);
    }
  }
}

TEST(SecondStageMatch, IdentityCropHasZeroResidual)
{
  const auto img = test::textured_image(160, 120, 4);
  const BoundingBox box{30, 20, 130, 100};
  AssociationConfig cfg;
  const auto s = second_stage_match(img, img, box, box, cfg);
  ASSERT_GT(s.matches.size(), 5u);
  for (const auto& k : s.query.keypoints)
    EXPECT_TRUE(box.contains(k.x, k.y));
  for (const auto& mt : s.matches)
  {
    const auto& q = s.query.keypoints[mt.query_idx];
    const auto& m = s.map.keypoints[mt.map_idx];
    EXPECT_EQ(q.x, m.x);
    EXPECT_EQ(q.y, m.y);
  }
}

TEST(SecondStageMatch, ShiftedCropsRecoverOffset)
{
  const auto img = test::textured_image(200, 150, 5);
  const auto shifted = crop(img, PixelRect{10, 6, 200, 150});
  // A pixel (x, y) in `shifted` is (x + 10, y + 6) in `img`.
  AssociationConfig cfg;
  const auto s = second_stage_match(shifted, img, BoundingBox{20, 20, 150, 120}, BoundingBox{30, 26, 160, 126}, cfg);
  ASSERT_GT(s.matches.size(), 5u);
  int good = 0;
  for (const auto& mt : s.matches)
  {
    const auto& q = s.query.keypoints[mt.query_idx];
    const auto& m = s.map.keypoints[mt.map_idx];
    good += (std::abs(q.x + 10 - m.x) < 0.5f && std::abs(q.y + 6 - m.y) < 0.5f);
  }
  EXPECT_GE(good, static_cast<int>(s.matches.size()) * 9 / 10);
}

/// 10x10 map image with points 0 at (5,5) and 1 at (7,5).
struct LiftFixture : ::testing::Test
{
  Database db;
  MapImage img;
  void SetUp() override
  {
    db.cloud = test::make_cloud({Vec3(1, 2, 3), Vec3(4, 5, 6)});
    db.covis = {{0, 3}, {1, 1}};
    img.image_id = 4;
    img.intensity = GrayImage(10, 10);
    img.depth.assign(100, std::numeric_limits<float>::infinity());
    img.point_id.assign(100, kNoPoint);
    img.point_id[img.index(5, 5)] = 0;
    img.point_id[img.index(7, 5)] = 1;
  }
};

TEST_F(LiftFixture, LookupExactNeighborAndEmpty)
{
  EXPECT_EQ(lookup_point_id(img, 5, 5, 2), 0);
  EXPECT_EQ(lookup_point_id(img, 7.3, 4.8, 2), 1);
  // Equidistant from both; lower id wins.
  EXPECT_EQ(lookup_point_id(img, 6, 5, 2), 0);
  EXPECT_EQ(lookup_point_id(img, 5, 6, 0), kNoPoint);
  EXPECT_EQ(lookup_point_id(img, 5, 6, 1), 0);
  EXPECT_EQ(lookup_point_id(img, 2, 2, 2), kNoPoint);
  EXPECT_EQ(lookup_point_id(img, 8, 8, 2), kNoPoint);
  EXPECT_EQ(lookup_point_id(img, 9, 7, 2), 1);
  EXPECT_EQ(lookup_point_id(img, -3, 50, 2), kNoPoint);
}

TEST_F(LiftFixture, LiftFillsCorrespondences)
{
  Paired p;
  p.add(11, 12, 5, 5);
  p.add(13, 14, 8, 6);
  p.add(15, 16, 1, 1);
  const auto out = lift_2d3d(p.matches, p.q, p.m, img, db, 2, Stage::Second,
                             [](const Vec2& v) { return Vec2(2 * v.x(), v.y() + 1); });
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].point_id, 0);
  EXPECT_EQ(out[0].point_xyz, Vec3(1, 2, 3));
  EXPECT_EQ(out[0].covis, 3);
  EXPECT_EQ(out[0].stage, Stage::Second);
  EXPECT_EQ(out[0].image_id, 4);
  EXPECT_EQ(out[0].query_px, Vec2(22, 13));
  EXPECT_EQ(out[0].map_px, Vec2(5, 5));
  EXPECT_EQ(out[1].point_id, 1);
  EXPECT_EQ(out[1].covis, 1);

  const auto plain = lift_2d3d(p.matches, p.q, p.m, img, db, 2, Stage::First);
  ASSERT_EQ(plain.size(), 2u);
  EXPECT_EQ(plain[1].query_px, Vec2(13, 14));
}

Correspondence2D3D corr(std::int64_t id, double x, double y, Stage s = Stage::First, std::int64_t covis = 1)
{
  Correspondence2D3D c;
  c.point_id = id;
  c.query_px = Vec2(x, y);
  c.stage = s;
  c.covis = covis;
  return c;
}

TEST(ConcatStages, UnionAndDuplicates)
{
  std::vector<Correspondence2D3D> a, b;
  for (int i = 0; i < 5; ++i)
    a.push_back(corr(i, i, 0));
  for (int i = 0; i < 7; ++i)
    b.push_back(corr(100 + i, i, 5, Stage::Second));
  EXPECT_EQ(concat_stages(a, b).size(), 12u);
  EXPECT_EQ(concat_stages(a, a).size(), 5u);
  EXPECT_TRUE(concat_stages({}, {}).empty());

  const auto merged = concat_stages({corr(9, 10, 10)}, {corr(9, 10.5, 10, Stage::Second)});
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].stage, Stage::First);
  // Same point far apart in the query is kept twice; different points at one pixel too.
  EXPECT_EQ(concat_stages({corr(9, 10, 10)}, {corr(9, 12, 10, Stage::Second)}).size(), 2u);
  EXPECT_EQ(concat_stages({corr(9, 10, 10)}, {corr(8, 10, 10, Stage::Second)}).size(), 2u);
}

TEST(ConcatStages, SizeBoundsOnRandomInput)
{
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> id(0, 20), px(0, 5);
  for (int t = 0; t < 100; ++t)
  {
    std::vector<Correspondence2D3D> a, b;
    for (int i = 0; i < 15; ++i)
      a.push_back(corr(id(rng), px(rng), px(rng)));
    for (int i = 0; i < 15; ++i)
      b.push_back(corr(id(rng), px(rng), px(rng), Stage::Second));
    const auto u = concat_stages(a, b);
    EXPECT_GE(u.size(), a.size());
    EXPECT_LE(u.size(), a.size() + b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_EQ(u[i].point_id, a[i].point_id);
  }
}

TEST(CovisibilityFilter, Examples)
{
  std::vector<Correspondence2D3D> c;
  for (int i = 1; i <= 10; ++i)
    c.push_back(corr(i, 0, 0, Stage::First, i));
  const auto f = covisibility_filter(c, 2);
  ASSERT_EQ(f.size(), 9u);
  for (const auto& x : f)
    EXPECT_GE(x.covis, 2);
  EXPECT_EQ(covisibility_filter(c, 5).size(), 6u);
  // Threshold 6 would leave five, so it relaxes to 5.
  EXPECT_EQ(covisibility_filter(c, 6).size(), 6u);

  std::vector<Correspondence2D3D> low;
  for (int i = 0; i < 5; ++i)
    low.push_back(corr(i, 0, 0, Stage::First, 1));
  for (int i = 0; i < 3; ++i)
    low.push_back(corr(10 + i, 0, 0, Stage::First, 2));
  EXPECT_EQ(covisibility_filter(low, 3).size(), 8u);
  EXPECT_TRUE(covisibility_filter({}, 2).empty());
}

TEST(CovisibilityFilter, SubsetWithThresholdProperty)
{
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> cv(1, 6), n(0, 30);
  for (int t = 0; t < 200; ++t)
  {
    std::vector<Correspondence2D3D> c;
    const int count = n(rng);
    for (int i = 0; i < count; ++i)
      c.push_back(corr(i, 0, 0, Stage::First, cv(rng)));
    const auto f = covisibility_filter(c, 4);
    std::int64_t lo = 1000;
    for (const auto& x : f)
      lo = std::min(lo, x.covis);
    // Everything at or above the smallest kept covisibility survives.
    std::size_t expected = 0;
    for (const auto& x : c)
      expected += (x.covis >= lo);
    if (!f.empty())
    {
      EXPECT_EQ(f.size(), expected);
    }
    EXPECT_TRUE(f.size() >= 6 || f.size() == c.size());
    EXPECT_LE(f.size(), c.size());
  }
}

TEST(AssociationConfig, Validation)
{
  AssociationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.crop_margin = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = AssociationConfig{};
  c.match_ratio = 0;
  EXPECT_THROW(c.validate(), Error);
}

} // namespace
} // namespace reloc
