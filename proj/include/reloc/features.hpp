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

#pragma once

#include "reloc/common.hpp"
#include "reloc/image.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace reloc
{

using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GlobalDescriptor
{
  std::vector<float> values;
  bool operator==(const GlobalDescriptor&) const = default;
};

struct Keypoint
{
  float x = 0.f;
  float y = 0.f;
  float score = 0.f;
  bool operator==(const Keypoint&) const = default;
};

/// Keypoints with one L2-normalized descriptor row each.
struct LocalFeatureSet
{
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  bool operator==(const LocalFeatureSet& o) const
  {
    return keypoints == o.keypoints && descriptors.rows() == o.descriptors.rows() &&
           descriptors.cols() == o.descriptors.cols() && descriptors == o.descriptors;
  }
};

struct Match
{
  int query_idx = 0;
  int map_idx = 0;
  double score = 0.0;
  bool operator==(const Match&) const = default;
};

/// Injective in both indices.
using MatchSet = std::vector<Match>;

inline double similarity(const GlobalDescriptor& a, const GlobalDescriptor& b)
{
  if (a.values.size() != b.values.size())
    throw Error("similarity: descriptor length mismatch (" + std::to_string(a.values.size()) + " vs " +
                std::to_string(b.values.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    s += static_cast<double>(a.values[i]) * b.values[i];
  return std::clamp(s, -1.0, 1.0);
}

//-----------------------------------------------------------------------------
// Built-in extractors

namespace detail
{
struct Gradients
{
  int width = 0, height = 0;
  std::vector<float> gx, gy;
};

/// Central differences with replicated borders on a float raster.
inline Gradients central_gradients(const std::vector<float>& v, int w, int h)
{
  Gradients g{w, h, {}, {}};
  g.gx.resize(v.size());
  g.gy.resize(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      const std::size_t row = static_cast<std::size_t>(y) * w;
      g.gx[row + x] = 0.5f * (v[row + xp] - v[row + xm]);
      g.gy[row + x] = 0.5f * (v[static_cast<std::size_t>(yp) * w + x] - v[static_cast<std::size_t>(ym) * w + x]);
    }
  return g;
}

inline std::vector<float> to_float(const GrayImage& img) { return {img.pixels.begin(), img.pixels.end()}; }

inline Gradients central_gradients(const GrayImage& img)
{
  return central_gradients(to_float(img), img.width, img.height);
}

/// Adds magnitude `m` at orientation `angle` to an 8-bin signed histogram with
/// linear interpolation between the two nearest bins.
inline void vote_orientation(float* bins, float angle, float m)
{
  constexpr float kBin = static_cast<float>(2.0 * 3.14159265358979323846 / 8.0);
  float b = angle / kBin;
  if (b < 0.f)
    b += 8.f;
  const int b0 = static_cast<int>(std::floor(b)) % 8;
  const float frac = b - std::floor(b);
  bins[b0] += m * (1.f - frac);
  bins[(b0 + 1) % 8] += m * frac;
}

inline void separable_blur(std::vector<float>& v, int w, int h, float sigma)
{
  const int radius = static_cast<int>(std::ceil(3.f * sigma));
  std::vector<float> k(2 * radius + 1);
  float sum = 0.f;
  for (int i = -radius; i <= radius; ++i)
    sum += k[i + radius] = std::exp(-0.5f * i * i / (sigma * sigma));
  for (auto& x : k)
    x /= sum;
  std::vector<float> tmp(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * v[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      v[static_cast<std::size_t>(y) * w + x] = acc;
    }
}

/// Gradients of the image after a Gaussian pre-blur (none when sigma is 0).
inline Gradients smoothed_gradients(const GrayImage& img, float sigma)
{
  auto v = to_float(img);
  if (sigma > 0.f)
    separable_blur(v, img.width, img.height, sigma);
  return central_gradients(v, img.width, img.height);
}
} // namespace detail

/// Gradient-orientation layout descriptor: the image is resized to 128x128 and
/// split into an 8x8 grid of cells, each holding an 8-bin magnitude-weighted
/// orientation histogram. Entries are square-rooted, offset by a small epsilon
/// and L2-normalized (512 dims).
inline GlobalDescriptor extract_global(const GrayImage& img)
{
  if (img.empty())
    throw Error("extract_global: empty image");
  constexpr int kSize = 128, kGrid = 8, kCell = kSize / kGrid, kBins = 8;
  const GrayImage small = (img.width == kSize && img.height == kSize) ? img : resize_bilinear(img, kSize, kSize);
  const auto g = detail::central_gradients(small);
  std::vector<float> hist(kGrid * kGrid * kBins, 0.f);
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
    {
      const std::size_t i = static_cast<std::size_t>(y) * kSize + x;
      const float m = std::hypot(g.gx[i], g.gy[i]);
      if (m == 0.f)
        continue;
      float* bins = &hist[((y / kCell) * kGrid + x / kCell) * kBins];
      detail::vote_orientation(bins, std::atan2(g.gy[i], g.gx[i]), m);
    }
  double norm2 = 0.0;
  for (auto& h : hist)
  {
    h = std::sqrt(h) + 1e-6f;
    norm2 += static_cast<double>(h) * h;
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (auto& h : hist)
    h *= inv;
  return {std::move(hist)};
}

inline constexpr int kLocalDescriptorDims = 128;
inline constexpr int kPatchRadius = 8; ///< 16x16 patch spans [x-8, x+7]

/// Scale of the Gaussian pre-blur applied before local feature gradients; it
/// suppresses single-splat texture that map renders and resampled queries do not share.
inline constexpr float kLocalPreBlur = 1.0f;

/// Harris response of precomputed gradients with a Gaussian window.
inline std::vector<float> harris_response(const detail::Gradients& g, float sigma = 1.5f, float kappa = 0.04f)
{
  const std::size_t n = g.gx.size();
  std::vector<float> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    xx[i] = g.gx[i] * g.gx[i];
    yy[i] = g.gy[i] * g.gy[i];
    xy[i] = g.gx[i] * g.gy[i];
  }
  detail::separable_blur(xx, g.width, g.height, sigma);
  detail::separable_blur(yy, g.width, g.height, sigma);
  detail::separable_blur(xy, g.width, g.height, sigma);
  std::vector<float> r(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    const float tr = xx[i] + yy[i];
    r[i] = xx[i] * yy[i] - xy[i] * xy[i] - kappa * tr * tr;
  }
  return r;
}

/// Harris response from central-difference gradients of the raw image.
inline std::vector<float> harris_response(const GrayImage& img, float sigma = 1.5f, float kappa = 0.04f)
{
  return harris_response(detail::central_gradients(img), sigma, kappa);
}

/// Descriptor for a keypoint at integer position (x, y): a 4x4 grid of 4x4-pixel
/// cells over the 16x16 patch, 8 orientation bins each, Gaussian weighted and
/// spatially interpolated. Gradients ignore intensity bias; the L2 normalization
/// removes gain. Entries are clipped at 0.2 and renormalized.
inline void describe_patch(const detail::Gradients& g, int x, int y, float* out)
{
  std::fill(out, out + kLocalDescriptorDims, 0.f);
  constexpr float kSigma = 8.f;
  for (int dy = 0; dy < 2 * kPatchRadius; ++dy)
    for (int dx = 0; dx < 2 * kPatchRadius; ++dx)
    {
      const int px = x - kPatchRadius + dx, py = y - kPatchRadius + dy;
      const std::size_t i = static_cast<std::size_t>(py) * g.width + px;
      const float ox = dx - kPatchRadius + 0.5f, oy = dy - kPatchRadius + 0.5f;
      const float m = std::hypot(g.gx[i], g.gy[i]) * std::exp(-(ox * ox + oy * oy) / (2.f * kSigma * kSigma));
      if (m == 0.f)
        continue;
      float bins[8] = {};
      detail::vote_orientation(bins, std::atan2(g.gy[i], g.gx[i]), m);
      const float cx = (dx + 0.5f) / 4.f - 0.5f, cy = (dy + 0.5f) / 4.f - 0.5f;
      const int cx0 = static_cast<int>(std::floor(cx)), cy0 = static_cast<int>(std::floor(cy));
      const float ax = cx - cx0, ay = cy - cy0;
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
        {
          const int ccx = cx0 + k, ccy = cy0 + j;
          if (ccx < 0 || ccx > 3 || ccy < 0 || ccy > 3)
            continue;
          const float wgt = (k ? ax : 1.f - ax) * (j ? ay : 1.f - ay);
          float* cell = out + (ccy * 4 + ccx) * 8;
          for (int b = 0; b < 8; ++b)
            cell[b] += wgt * bins[b];
        }
    }
  auto normalize = [out]() {
    double s = 0.0;
    for (int i = 0; i < kLocalDescriptorDims; ++i)
      s += static_cast<double>(out[i]) * out[i];
    if (s <= 0.0)
    {
      std::fill(out, out + kLocalDescriptorDims, 1.f / std::sqrt(static_cast<float>(kLocalDescriptorDims)));
      return;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(s));
    for (int i = 0; i < kLocalDescriptorDims; ++i)
      out[i] *= inv;
  };
  normalize();
  for (int i = 0; i < kLocalDescriptorDims; ++i)
    out[i] = std::min(out[i], 0.2f);
  normalize();
}

/// Harris corners (3x3 non-maximum suppression, raster-order tie breaking) ranked
/// by response; the strongest `max_kp` get patch descriptors. Keypoints keep a
/// margin so their patch lies inside the image.
inline LocalFeatureSet extract_local(const GrayImage& img, int max_kp)
{
  if (max_kp <= 0)
    throw Error("extract_local: max_kp must be positive");
  LocalFeatureSet fs;
  constexpr int kMargin = kPatchRadius + 1;
  if (img.width < 2 * kMargin + 1 || img.height < 2 * kMargin + 1)
  {
    fs.descriptors.resize(0, kLocalDescriptorDims);
    return fs;
  }
  const auto g = detail::smoothed_gradients(img, kLocalPreBlur);
  const auto r = harris_response(g);
  const int w = img.width;
  constexpr float kMinResponse = 1e-2f;
  std::vector<Keypoint> cand;
  for (int y = kMargin; y < img.height - kMargin; ++y)
    for (int x = kMargin; x < w - kMargin; ++x)
    {
      const float v = r[static_cast<std::size_t>(y) * w + x];
      if (!(v > kMinResponse))
        continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
        {
          if (dx == 0 && dy == 0)
            continue;
          const float nb = r[static_cast<std::size_t>(y + dy) * w + x + dx];
          const bool before = dy < 0 || (dy == 0 && dx < 0);
          if (before ? nb >= v : nb > v)
          {
            is_max = false;
            break;
          }
        }
      if (is_max)
        cand.push_back({static_cast<float>(x), static_cast<float>(y), v});
    }
  std::stable_sort(cand.begin(), cand.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (static_cast<int>(cand.size()) > max_kp)
    cand.resize(static_cast<std::size_t>(max_kp));

  fs.keypoints = std::move(cand);
  fs.descriptors.resize(static_cast<Eigen::Index>(fs.keypoints.size()), kLocalDescriptorDims);
  for (std::size_t k = 0; k < fs.keypoints.size(); ++k)
    describe_patch(g, static_cast<int>(fs.keypoints[k].x), static_cast<int>(fs.keypoints[k].y),
                   fs.descriptors.row(static_cast<Eigen::Index>(k)).data());
  return fs;
}

/// Mutual nearest neighbors in Euclidean descriptor distance. Each side applies the
/// ratio test nearest < ratio * second-nearest when it has a second neighbor, so the
/// result is symmetric under swapping the arguments. Score = 1 - distance / 2.
inline MatchSet match_features(const LocalFeatureSet& a, const LocalFeatureSet& b, double ratio = 0.85)
{
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw Error("match_features: ratio must be in (0, 1]");
  MatchSet out;
  if (a.empty() || b.empty())
    return out;
  const Eigen::MatrixXf sim = a.descriptors * b.descriptors.transpose();
  const auto na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  constexpr float kInf = std::numeric_limits<float>::infinity();
  auto dist2 = [&](int i, int j) { return std::max(0.f, 2.f - 2.f * sim(i, j)); };

  std::vector<int> best_a(na, -1), best_b(nb, -1);
  std::vector<float> d1a(na, kInf), d2a(na, kInf), d1b(nb, kInf), d2b(nb, kInf);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
    {
      const float d = dist2(i, j);
      if (d < d1a[i])
      {
        d2a[i] = d1a[i];
        d1a[i] = d;
        best_a[i] = j;
      }
      else if (d < d2a[i])
        d2a[i] = d;
      if (d < d1b[j])
      {
        d2b[j] = d1b[j];
        d1b[j] = d;
        best_b[j] = i;
      }
      else if (d < d2b[j])
        d2b[j] = d;
    }
  const double r2 = ratio * ratio;
  for (int i = 0; i < na; ++i)
  {
    const int j = best_a[i];
    if (j < 0 || best_b[j] != i)
      continue;
    if (nb > 1 && !(d1a[i] < r2 * d2a[i]))
      continue;
    if (na > 1 && !(d1b[j] < r2 * d2b[j]))
      continue;
    out.push_back({i, j, 1.0 - std::sqrt(static_cast<double>(d1a[i])) / 2.0});
  }
  return out;
}

//-----------------------------------------------------------------------------
// Extractor selection by name

class GlobalExtractor
{
public:
  virtual ~GlobalExtractor() = default;
  virtual std::string name() const = 0;
  virtual GlobalDescriptor extract(const GrayImage& img) const = 0;
};

class LocalExtractor
{
public:
  virtual ~LocalExtractor() = default;
  virtual std::string name() const = 0;
  virtual LocalFeatureSet extract(const GrayImage& img, int max_kp) const = 0;
};

class HogGistExtractor final : public GlobalExtractor
{
public:
  std::string name() const override { return "hog-gist"; }
  GlobalDescriptor extract(const GrayImage& img) const override { return extract_global(img); }
};

class HarrisPatchExtractor final : public LocalExtractor
{
public:
  std::string name() const override { return "harris-patch"; }
  LocalFeatureSet extract(const GrayImage& img, int max_kp) const override { return extract_local(img, max_kp); }
};

inline std::unique_ptr<GlobalExtractor> make_global_extractor(const std::string& name)
{
  if (name == "hog-gist")
    return std::make_unique<HogGistExtractor>();
  throw Error("unknown global extractor '" + name + "' (available: hog-gist)");
}

inline std::unique_ptr<LocalExtractor> make_local_extractor(const std::string& name)
{
  if (name == "harris-patch")
    return std::make_unique<HarrisPatchExtractor>();
  throw Error("unknown local extractor '" + name + "' (available: harris-patch)");
}

} // namespace reloc
