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

GlobalDescriptor unit(std::vector<float> v)
{
  double n = 0;
  for (const auto x : v)
    n += double(x) * x;
  for (auto& x : v)
    x = static_cast<float>(x / std::sqrt(n));
  return {v};
}

TEST(Similarity, Examples)
{
  const auto a = unit({1, 2, 3, 4});
  auto neg = a;
  for (auto& x : neg.values)
    x = -x;
  EXPECT_NEAR(similarity(a, a), 1.0, 1e-6);
  EXPECT_NEAR(similarity(a, neg), -1.0, 1e-6);
  EXPECT_EQ(similarity(unit({1, 0, 0}), unit({0, 1, 0})), 0.0);
  EXPECT_THROW(similarity(unit({1, 0}), unit({1, 0, 0})), Error);
}

double norm(const GlobalDescriptor& d)
{
  double n = 0;
  for (const auto x : d.values)
    n += double(x) * x;
  return std::sqrt(n);
}

TEST(GlobalDescriptor, UnitNormAndFixedLength)
{
  for (const auto& img : {test::textured_image(200, 100, 1), GrayImage(50, 50, 7), test::checkerboard(64, 64, 8)})
  {
    const auto d = extract_global(img);
    ASSERT_EQ(d.values.size(), 512u);
    EXPECT_NEAR(norm(d), 1.0, 1e-6);
    for (const auto x : d.values)
      EXPECT_TRUE(std::isfinite(x));
  }
  EXPECT_THROW(extract_global(GrayImage{}), Error);
}

TEST(GlobalDescriptor, IdenticalGainAndUnrelated)
{
  const auto img = test::textured_image(160, 120, 2);
  EXPECT_NEAR(similarity(extract_global(img), extract_global(img)), 1.0, 1e-6);
  GrayImage dim = img;
  for (auto& v : dim.pixels)
    v = static_cast<std::uint8_t>(v / 2);
  EXPECT_GT(similarity(extract_global(img), extract_global(dim)), 0.99);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 255);
  GrayImage noise(160, 120);
  for (auto& v : noise.pixels)
    v = static_cast<std::uint8_t>(u(rng));
  EXPECT_LT(similarity(extract_global(img), extract_global(noise)), 0.9);
}

// Harris response computed naively in double precision: 2D Gaussian pre-blur,
// central differences, 2D Gaussian structure-tensor window.
std::vector<double> naive_harris(const GrayImage& img, double pre, double win)
{
  const int w = img.width, h = img.height;
  auto blur = [&](const std::vector<double>& in, double sigma) {
    const int r = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
      {
        double s = 0, ws = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
          {
            const int xx = std::clamp(x + dx, 0, w - 1), yy = std::clamp(y + dy, 0, h - 1);
            const double k = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            s += k * in[yy * w + xx];
            ws += k;
          }
        out[y * w + x] = s / ws;
      }
    return out;
  };
  std::vector<double> v(img.pixels.begin(), img.pixels.end());
  v = blur(v, pre);
  std::vector<double> xx(v.size()), yy(v.size()), xy(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      const double gx = 0.5 * (v[y * w + std::min(x + 1, w - 1)] - v[y * w + std::max(x - 1, 0)]);
      const double gy = 0.5 * (v[std::min(y + 1, h - 1) * w + x] - v[std::max(y - 1, 0) * w + x]);
      xx[y * w + x] = gx * gx;
      yy[y * w + x] = gy * gy;
      xy[y * w + x] = gx * gy;
    }
  xx = blur(xx, win);
  yy = blur(yy, win);
  xy = blur(xy, win);
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = xx[i] * yy[i] - xy[i] * xy[i] - 0.04 * (xx[i] + yy[i]) * (xx[i] + yy[i]);
  return r;
}

TEST(LocalFeatures, CheckerboardCornersMatchNaiveHarris)
{
  constexpr int kCell = 12, kSize = 96;
  const auto img = test::checkerboard(kSize, kSize, kCell);
  const auto f = extract_local(img, 1000);
  const auto r = naive_harris(img, 1.0, 1.5);

  // Every keypoint sits on a grid intersection, at continuous position k * cell - 0.5.
  for (const auto& k : f.keypoints)
  {
    const double cx = std::round((k.x + 0.5) / kCell) * kCell - 0.5;
    const double cy = std::round((k.y + 0.5) / kCell) * kCell - 0.5;
    EXPECT_LE(std::abs(k.x - cx), 1.0);
    EXPECT_LE(std::abs(k.y - cy), 1.0);
  }
  // Every intersection clear of the border has a keypoint within 1 px of the naive
  // response maximum around it.
  int corners = 0;
  for (int gy = kCell; gy < kSize; gy += kCell)
    for (int gx = kCell; gx < kSize; gx += kCell)
    {
      if (gx < kPatchRadius + 3 || gy < kPatchRadius + 3 || gx > kSize - kPatchRadius - 3 ||
          gy > kSize - kPatchRadius - 3)
        continue;
      ++corners;
      int bx = gx, by = gy;
      for (int y = gy - 2; y <= gy + 1; ++y)
        for (int x = gx - 2; x <= gx + 1; ++x)
          if (r[y * kSize + x] > r[by * kSize + bx])
          {
            bx = x;
            by = y;
          }
      const bool found = std::any_of(f.keypoints.begin(), f.keypoints.end(), [&](const Keypoint& k) {
        return std::abs(k.x - bx) <= 1.0f && std::abs(k.y - by) <= 1.0f;
      });
      EXPECT_TRUE(found) << "corner " << gx << "," << gy;
    }
  EXPECT_EQ(corners, 49);
}

TEST(LocalFeatures, LibraryResponseAgreesWithNaiveOnRawGradients)
{
  const auto img = test::textured_image(40, 32, 7);
  // harris_response(GrayImage) skips the pre-blur; emulate with a tiny pre-blur sigma.
  const auto lib = harris_response(img);
  const auto ref = naive_harris(img, 1e-3, 1.5);
  double scale = 0;
  for (const auto v : ref)
    scale = std::max(scale, std::abs(v));
  for (int y = 6; y < 26; ++y)
    for (int x = 6; x < 34; ++x)
      EXPECT_NEAR(lib[y * 40 + x] / scale, ref[y * 40 + x] / scale, 1e-4);
}

TEST(LocalFeatures, ConstantAndTinyImagesGiveNothing)
{
  EXPECT_TRUE(extract_local(GrayImage(64, 64, 100), 100).empty());
  EXPECT_TRUE(extract_local(test::checkerboard(10, 10, 3), 100).empty());
  EXPECT_THROW(extract_local(GrayImage(64, 64, 100), 0), Error);
}

TEST(LocalFeatures, InvariantsAndDeterminism)
{
  const auto img = test::textured_image(180, 120, 11);
  const auto a = extract_local(img, 150);
  const auto b = extract_local(img, 150);
  EXPECT_EQ(a, b);
  ASSERT_FALSE(a.empty());
  EXPECT_LE(a.size(), 150u);
  ASSERT_EQ(static_cast<std::size_t>(a.descriptors.rows()), a.size());
  ASSERT_EQ(a.descriptors.cols(), kLocalDescriptorDims);
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    const auto& k = a.keypoints[i];
    EXPECT_TRUE(k.x >= 0 && k.y >= 0 && k.x < img.width && k.y < img.height);
    EXPECT_NEAR(a.descriptors.row(static_cast<Eigen::Index>(i)).norm(), 1.0f, 1e-5f);
    if (i > 0)
    {
      EXPECT_GE(a.keypoints[i - 1].score, k.score);
    }
  }
}

LocalFeatureSet random_set(std::mt19937_64& rng, int n)
{
  std::normal_distribution<float> g(0.f, 1.f);
  LocalFeatureSet f;
  f.descriptors.resize(n, kLocalDescriptorDims);
  for (int i = 0; i < n; ++i)
  {
    f.keypoints.push_back({static_cast<float>(i), 0.f, 1.f});
    for (int j = 0; j < kLocalDescriptorDims; ++j)
      f.descriptors(i, j) = g(rng);
    f.descriptors.row(i).normalize();
  }
  return f;
}

void expect_injective(const MatchSet& m)
{
  std::set<int> q, p;
  for (const auto& x : m)
  {
    EXPECT_TRUE(q.insert(x.query_idx).second);
    EXPECT_TRUE(p.insert(x.map_idx).second);
    EXPECT_GE(x.score, 0.0);
    EXPECT_LE(x.score, 1.0);
  }
}

TEST(MatchFeatures, IdenticalSetsMatchOneToOne)
{
  std::mt19937_64 rng(1);
  const auto a = random_set(rng, 60);
  const auto m = match_features(a, a, 0.8);
  ASSERT_EQ(m.size(), 60u);
  for (const auto& x : m)
  {
    EXPECT_EQ(x.query_idx, x.map_idx);
    EXPECT_NEAR(x.score, 1.0, 1e-3);
  }
}

TEST(MatchFeatures, SingletonsBypassRatioTest)
{
  std::mt19937_64 rng(2);
  const auto a = random_set(rng, 1), b = random_set(rng, 1);
  const auto m = match_features(a, b, 0.1);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].query_idx, 0);
  EXPECT_EQ(m[0].map_idx, 0);
  EXPECT_TRUE(match_features(a, LocalFeatureSet{}, 0.8).empty());
  EXPECT_TRUE(match_features(LocalFeatureSet{}, b, 0.8).empty());
}

TEST(MatchFeatures, RandomDescriptorsRarelyMatch)
{
  std::mt19937_64 rng(3);
  const auto a = random_set(rng, 200), b = random_set(rng, 200);
  EXPECT_LT(match_features(a, b, 0.8).size(), 10u);
}

TEST(MatchFeatures, InjectiveAndSymmetricOnRandomInputs)
{
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> size(1, 80);
  for (int trial = 0; trial < 100; ++trial)
  {
    const auto a = random_set(rng, size(rng));
    auto b = random_set(rng, size(rng));
    // Plant a few near-duplicates so matches exist.
    for (Eigen::Index i = 0; i < std::min(a.descriptors.rows(), b.descriptors.rows()) / 2; ++i)
    {
      b.descriptors.row(i) = a.descriptors.row(i) + 0.05f * b.descriptors.row(i);
      b.descriptors.row(i).normalize();
    }
    const double ratio = 0.6 + 0.004 * trial;
    const auto ab = match_features(a, b, ratio);
    const auto ba = match_features(b, a, ratio);
    expect_injective(ab);
    ASSERT_EQ(ab.size(), ba.size());
    std::set<std::pair<int, int>> fwd, bwd;
    for (const auto& m : ab)
      fwd.insert({m.query_idx, m.map_idx});
    for (const auto& m : ba)
      bwd.insert({m.map_idx, m.query_idx});
    EXPECT_EQ(fwd, bwd);
  }
}

TEST(Extractors, SelectionByName)
{
  EXPECT_EQ(make_global_extractor("hog-gist")->name(), "hog-gist");
  EXPECT_EQ(make_local_extractor("harris-patch")->name(), "harris-patch");
  try
  {
    make_local_extractor("superpoint");
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_NE(std::string(e.what()).find("harris-patch"), std::string::npos);
  }
  EXPECT_THROW(make_global_extractor("netvlad"), Error);
}

} // namespace
} // namespace reloc
