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

#include "reloc/dbscan.hpp"
#include "reloc/features.hpp"
#include "reloc/mapdb.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

namespace reloc
{

/// Half-open pixel box [x_min, x_max) x [y_min, y_max).
struct BoundingBox
{
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  bool contains(double x, double y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
  PixelRect rect() const { return {x_min, y_min, x_max, y_max}; }
  bool operator==(const BoundingBox&) const = default;
};

enum class Stage { First, Second };

struct Correspondence2D3D
{
  Vec2 query_px = Vec2::Zero(); ///< original query image pixel
  std::int64_t point_id = kNoPoint;
  Vec3 point_xyz = Vec3::Zero();
  std::int64_t covis = 0;
  Stage stage = Stage::First;
  std::int64_t image_id = 0; ///< map image the match came from
  Vec2 map_px = Vec2::Zero();
};

struct AssociationConfig
{
  double match_cluster_eps = 64.0; ///< px, in joint (qx, qy, mx, my) space
  int match_cluster_min_pts = 4;
  int min_cluster_matches = 8;
  double crop_margin = 0.1;        ///< box growth per side, fraction of box size
  int min_box = 32;                ///< px
  int lift_radius = 2;             ///< px, L-infinity search window
  int min_covis = 2;
  int max_kp_second = 512;
  double match_ratio = 0.85;
  bool use_two_stage = true;
  bool use_covis_filter = true;

  void validate() const
  {
    if (!(match_cluster_eps > 0.0) || match_cluster_min_pts < 1 || min_cluster_matches < 1)
      throw Error("association: invalid clustering parameters");
    if (!(crop_margin >= 0.0 && crop_margin < 0.5))
      throw Error("association: crop_margin must be in [0, 0.5)");
    if (min_box < 1 || lift_radius < 0 || min_covis < 1 || max_kp_second < 1)
      throw Error("association: invalid thresholds");
    if (!(match_ratio > 0.0 && match_ratio <= 1.0))
      throw Error("association: match_ratio must be in (0, 1]");
  }
};

//-----------------------------------------------------------------------------

namespace detail
{
/// Hull of the points grown by `margin` per side, at least `min_size` wide, clamped
/// to [0, w) x [0, h).
inline BoundingBox grow_box(double x0, double y0, double x1, double y1, double margin, int min_size, int w, int h)
{
  auto axis = [&](double lo, double hi, int limit, int& out_lo, int& out_hi) {
    const double grow = margin * (hi - lo);
    int a = static_cast<int>(std::floor(lo - grow));
    int b = static_cast<int>(std::ceil(hi + grow)) + 1;
    const int target = std::min(min_size, limit);
    if (b - a < target)
    {
      const int extra = target - (b - a);
      a -= extra / 2;
      b += extra - extra / 2;
    }
    if (a < 0)
    {
      b = std::min(limit, b - a);
      a = 0;
    }
    if (b > limit)
    {
      a = std::max(0, a - (b - limit));
      b = limit;
    }
    out_lo = a;
    out_hi = b;
  };
  BoundingBox box;
  axis(x0, x1, w, box.x_min, box.x_max);
  axis(y0, y1, h, box.y_min, box.y_max);
  return box;
}
} // namespace detail

struct MatchCluster
{
  MatchSet matches;
  BoundingBox query_box;
  BoundingBox map_box;
};

/// Largest DBSCAN cluster of matches in joint query/map pixel space with boxes
/// around it in both images, or nullopt when it is smaller than
/// min_cluster_matches.
inline std::optional<MatchCluster> cluster_matches(const MatchSet& matches, const LocalFeatureSet& qfeats,
                                                   const LocalFeatureSet& mfeats, int query_w, int query_h,
                                                   int map_w, int map_h, const AssociationConfig& cfg)
{
  if (matches.empty())
    return std::nullopt;
  std::vector<Eigen::Vector4d> joint;
  joint.reserve(matches.size());
  for (const auto& m : matches)
  {
    const auto& q = qfeats.keypoints[m.query_idx];
    const auto& p = mfeats.keypoints[m.map_idx];
    joint.emplace_back(q.x, q.y, p.x, p.y);
  }
  const auto labels = dbscan<4>(joint, cfg.match_cluster_eps, cfg.match_cluster_min_pts);
  std::map<int, int> sizes;
  for (const int l : labels)
    if (l != kNoise)
      ++sizes[l];
  int best = kNoise, best_size = 0;
  for (const auto& [l, s] : sizes)
    if (s > best_size)
    {
      best = l;
      best_size = s;
    }
  if (best_size < cfg.min_cluster_matches)
    return std::nullopt;

  MatchCluster out;
  double qx0 = 1e300, qy0 = 1e300, qx1 = -1e300, qy1 = -1e300;
  double mx0 = 1e300, my0 = 1e300, mx1 = -1e300, my1 = -1e300;
  for (std::size_t i = 0; i < matches.size(); ++i)
  {
    if (labels[i] != best)
      continue;
    out.matches.push_back(matches[i]);
    const auto& j = joint[i];
    qx0 = std::min(qx0, j[0]); qx1 = std::max(qx1, j[0]);
    qy0 = std::min(qy0, j[1]); qy1 = std::max(qy1, j[1]);
    mx0 = std::min(mx0, j[2]); mx1 = std::max(mx1, j[2]);
    my0 = std::min(my0, j[3]); my1 = std::max(my1, j[3]);
  }
  out.query_box = detail::grow_box(qx0, qy0, qx1, qy1, cfg.crop_margin, cfg.min_box, query_w, query_h);
  out.map_box = detail::grow_box(mx0, my0, mx1, my1, cfg.crop_margin, cfg.min_box, map_w, map_h);
  return out;
}

/// Feature sets and their matches, with keypoints expressed in the full images.
struct StageMatches
{
  LocalFeatureSet query;
  LocalFeatureSet map;
  MatchSet matches;
};

/// Re-extracts and matches features inside the two boxes; keypoints are shifted
/// back by the box offsets.
inline StageMatches second_stage_match(const GrayImage& query, const GrayImage& map, const BoundingBox& qbox,
                                       const BoundingBox& mbox, const AssociationConfig& cfg,
                                       const LocalExtractor& extractor)
{
  StageMatches out;
  out.query = extractor.extract(crop(query, qbox.rect()), cfg.max_kp_second);
  out.map = extractor.extract(crop(map, mbox.rect()), cfg.max_kp_second);
  for (auto& k : out.query.keypoints)
  {
    k.x += static_cast<float>(qbox.x_min);
    k.y += static_cast<float>(qbox.y_min);
  }
  for (auto& k : out.map.keypoints)
  {
    k.x += static_cast<float>(mbox.x_min);
    k.y += static_cast<float>(mbox.y_min);
  }
  out.matches = match_features(out.query, out.map, cfg.match_ratio);
  return out;
}

inline StageMatches second_stage_match(const GrayImage& query, const GrayImage& map, const BoundingBox& qbox,
                                       const BoundingBox& mbox, const AssociationConfig& cfg)
{
  return second_stage_match(query, map, qbox, mbox, cfg, HarrisPatchExtractor{});
}

/// Point id at a map pixel, or the nearest non-empty pixel within the L-infinity
/// lift radius (Euclidean distance, then lower id, break ties).
inline std::int64_t lookup_point_id(const MapImage& img, double x, double y, int radius)
{
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  if (img.intensity.contains(cx, cy) && img.id_at(cx, cy) != kNoPoint)
    return img.id_at(cx, cy);
  std::int64_t best = kNoPoint;
  int best_d2 = 0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
    {
      const int px = cx + dx, py = cy + dy;
      if (!img.intensity.contains(px, py))
        continue;
      const std::int64_t id = img.id_at(px, py);
      if (id == kNoPoint)
        continue;
      const int d2 = dx * dx + dy * dy;
      if (best == kNoPoint || d2 < best_d2 || (d2 == best_d2 && id < best))
      {
        best = id;
        best_d2 = d2;
      }
    }
  return best;
}

using PixelMap = std::function<Vec2(const Vec2&)>;

/// Turns 2D-2D matches into 2D-3D correspondences through the map image's
/// point-id buffer. Matches without a point nearby are dropped.
inline std::vector<Correspondence2D3D> lift_2d3d(const MatchSet& matches, const LocalFeatureSet& qfeats,
                                                 const LocalFeatureSet& mfeats, const MapImage& map_img,
                                                 const Database& db, int lift_radius, Stage stage,
                                                 const PixelMap& to_query_px = {})
{
  std::vector<Correspondence2D3D> out;
  out.reserve(matches.size());
  for (const auto& m : matches)
  {
    const auto& mk = mfeats.keypoints[m.map_idx];
    const std::int64_t id = lookup_point_id(map_img, mk.x, mk.y, lift_radius);
    if (id == kNoPoint)
      continue;
    const auto& qk = qfeats.keypoints[m.query_idx];
    Correspondence2D3D c;
    c.query_px = to_query_px ? to_query_px(Vec2(qk.x, qk.y)) : Vec2(qk.x, qk.y);
    c.point_id = id;
    c.point_xyz = db.point(id).xyz.cast<double>();
    c.covis = db.covis_of(id);
    c.stage = stage;
    c.image_id = map_img.image_id;
    c.map_px = Vec2(mk.x, mk.y);
    out.push_back(c);
  }
  return out;
}

/// Union of two correspondence lists. An entry duplicates an earlier one when both
/// reference the same point and their query pixels are within 1 px; the earlier
/// (first-stage) entry wins.
inline std::vector<Correspondence2D3D> concat_stages(const std::vector<Correspondence2D3D>& first,
                                                     const std::vector<Correspondence2D3D>& second)
{
  std::vector<Correspondence2D3D> out = first;
  std::unordered_multimap<std::int64_t, std::size_t> by_point;
  for (std::size_t i = 0; i < out.size(); ++i)
    by_point.emplace(out[i].point_id, i);
  for (const auto& c : second)
  {
    bool dup = false;
    const auto [lo, hi] = by_point.equal_range(c.point_id);
    for (auto it = lo; it != hi && !dup; ++it)
      dup = (out[it->second].query_px - c.query_px).norm() <= 1.0;
    if (dup)
      continue;
    by_point.emplace(c.point_id, out.size());
    out.push_back(c);
  }
  return out;
}

/// Keeps correspondences whose point is seen by at least `min_covis` map images,
/// lowering the threshold step by step while fewer than six survive.
inline std::vector<Correspondence2D3D> covisibility_filter(const std::vector<Correspondence2D3D>& corrs, int min_covis)
{
  constexpr std::size_t kMinSurvivors = 6;
  std::vector<Correspondence2D3D> out;
  for (int threshold = std::max(min_covis, 1); threshold >= 1; --threshold)
  {
    out.clear();
    for (const auto& c : corrs)
      if (c.covis >= threshold)
        out.push_back(c);
    if (out.size() >= kMinSurvivors)
      break;
  }
  return out;
}

} // namespace reloc
