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

#include "reloc/association.hpp"
#include "reloc/config.hpp"
#include "reloc/features.hpp"
#include "reloc/mapdb.hpp"
#include "reloc/pose.hpp"
#include "reloc/projection.hpp"
#include "reloc/retrieval.hpp"

#include <optional>
#include <vector>

namespace reloc
{

/// A query brought into the geometry of one panorama face: the contrast-normalized
/// pinhole image resampled on the face grid (through the inverse warp when the
/// database uses it), so map and query features see the same pixel scale.
struct QueryView
{
  GrayImage normalized;
  GrayImage warped;                    ///< S x S
  std::vector<std::uint32_t> invalid;  ///< integral image of unsampled pixels, (S+1)^2
  CameraIntrinsics intrinsics;
  int face_size = 0;
  bool use_hec = true;

  /// Original query pixel of a continuous warped-grid position.
  Vec2 to_original(const Vec2& w) const
  {
    double u = std::clamp((w.x() + 0.5) * 2.0 / face_size - 1.0, -1.0, 1.0);
    double v = std::clamp((w.y() + 0.5) * 2.0 / face_size - 1.0, -1.0, 1.0);
    if (use_hec)
    {
      const Vec2 p = hec_inverse(u, v);
      u = p.x();
      v = p.y();
    }
    return {intrinsics.fx * u + intrinsics.cx, intrinsics.fy * v + intrinsics.cy};
  }

  /// True when every pixel of the window [x - r, x + r]^2 was sampled from the query.
  bool window_valid(int x, int y, int r) const
  {
    const int x0 = x - r, y0 = y - r, x1 = x + r + 1, y1 = y + r + 1;
    if (x0 < 0 || y0 < 0 || x1 > face_size || y1 > face_size)
      return false;
    const auto at = [&](int xx, int yy) { return invalid[static_cast<std::size_t>(yy) * (face_size + 1) + xx]; };
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0) == 0;
  }
};

inline QueryView prepare_query(const GrayImage& query, const CameraIntrinsics& k, const MapBuildConfig& cfg)
{
  k.validate();
  if (query.width != k.width || query.height != k.height)
    throw Error("query size " + std::to_string(query.width) + "x" + std::to_string(query.height) +
                " does not match intrinsics " + std::to_string(k.width) + "x" + std::to_string(k.height));
  QueryView view;
  view.intrinsics = k;
  view.face_size = cfg.projection.face_size;
  view.use_hec = cfg.projection.use_hec;
  view.normalized = normalize_contrast(query, cfg);
  const int s = view.face_size;
  view.warped = GrayImage(s, s);
  view.invalid.assign(static_cast<std::size_t>(s + 1) * (s + 1), 0);
  for (int y = 0; y < s; ++y)
  {
    std::uint32_t row = 0;
    for (int x = 0; x < s; ++x)
    {
      const Vec2 p = view.to_original(Vec2(x, y));
      const bool inside = p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= k.width - 1.0 && p.y() <= k.height - 1.0;
      if (inside)
        view.warped.at(x, y) =
            static_cast<std::uint8_t>(std::lround(std::clamp(sample_bilinear(view.normalized, p.x(), p.y()), 0.0, 255.0)));
      row += inside ? 0 : 1;
      view.invalid[static_cast<std::size_t>(y + 1) * (s + 1) + x + 1] =
          view.invalid[static_cast<std::size_t>(y) * (s + 1) + x + 1] + row;
    }
  }
  return view;
}

/// Keeps matches whose query keypoint descriptor window lies on sampled pixels.
inline MatchSet drop_border_matches(const MatchSet& matches, const LocalFeatureSet& qfeats, const QueryView& view)
{
  MatchSet out;
  for (const auto& m : matches)
  {
    const auto& k = qfeats.keypoints[m.query_idx];
    if (view.window_valid(static_cast<int>(k.x), static_cast<int>(k.y), kPatchRadius + 1))
      out.push_back(m);
  }
  return out;
}

/// Removes keypoints whose descriptor window touches unsampled pixels.
inline LocalFeatureSet drop_border_keypoints(const LocalFeatureSet& f, const QueryView& view)
{
  LocalFeatureSet out;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < f.keypoints.size(); ++i)
    if (view.window_valid(static_cast<int>(f.keypoints[i].x), static_cast<int>(f.keypoints[i].y), kPatchRadius + 1))
      keep.push_back(static_cast<Eigen::Index>(i));
  out.descriptors.resize(static_cast<Eigen::Index>(keep.size()), f.descriptors.cols());
  for (std::size_t r = 0; r < keep.size(); ++r)
  {
    out.keypoints.push_back(f.keypoints[static_cast<std::size_t>(keep[r])]);
    out.descriptors.row(static_cast<Eigen::Index>(r)) = f.descriptors.row(keep[r]);
  }
  return out;
}

/// Global descriptor of the query's central band, comparable to map patch descriptors.
inline GlobalDescriptor describe_query(const QueryView& view, const MapBuildConfig& cfg)
{
  return make_global_extractor(cfg.global_extractor)->extract(crop(view.warped, cube_patch_rect(0, view.face_size, cfg.patch_band)));
}

inline std::vector<Candidate> retrieve_query(const Database& db, const QueryView& view, int k)
{
  return retrieve_topk(describe_query(view, db.config), db, k);
}

struct CandidateTrace
{
  Candidate candidate;
  std::size_t first_matches = 0;
  bool accepted = false;
  std::optional<MatchCluster> cluster;
  std::size_t second_matches = 0;
  std::size_t lifted = 0;
};

struct QueryOutcome
{
  std::vector<Candidate> retrieved; ///< top k
  std::vector<Candidate> selected;  ///< candidates passed to the fine stage
  std::vector<CandidateTrace> trace;
  std::vector<Correspondence2D3D> correspondences; ///< RANSAC input
  RelocalizationResult result;
};

/// Coarse-to-fine relocalization of one query against the database. Map-side
/// settings come from the database; `cfg.map` is not consulted.
inline QueryOutcome relocalize_query(const Database& db, const GrayImage& query, const CameraIntrinsics& k,
                                     const PipelineConfig& cfg)
{
  cfg.retrieval.validate();
  cfg.association.validate();
  cfg.ransac.validate();
  if (db.images.empty())
    throw Error("relocalize: empty database");
  const auto& mcfg = db.config;
  const QueryView view = prepare_query(query, k, mcfg);
  const auto local = make_local_extractor(mcfg.local_extractor);
  const int s = view.face_size;

  QueryOutcome out;
  out.retrieved = retrieve_query(db, view, cfg.retrieval.k);
  if (cfg.retrieval.use_covis_cluster)
    out.selected = covisibility_cluster(out.retrieved, db, cfg.retrieval);
  else
    out.selected.assign(out.retrieved.begin(),
                        out.retrieved.begin() + std::min<std::ptrdiff_t>(cfg.retrieval.k_prime, out.retrieved.size()));

  const LocalFeatureSet qfeats = drop_border_keypoints(local->extract(view.warped, mcfg.max_kp), view);
  const auto to_query = [&view](const Vec2& p) { return view.to_original(p); };
  std::vector<Correspondence2D3D> pool;
  StageStats& stats = out.result.stats;
  for (const auto& cand : out.selected)
  {
    CandidateTrace t;
    t.candidate = cand;
    ++stats.candidates_tried;
    const std::size_t idx = static_cast<std::size_t>(&image_by_id(db, cand.image_id) - db.images.data());
    const MapImage& img = db.images[idx];
    const LocalFeatureSet& mfeats = db.local_feats[idx];
    const MatchSet first = match_features(qfeats, mfeats, cfg.association.match_ratio);
    t.first_matches = first.size();
    stats.matches += first.size();
    std::vector<Correspondence2D3D> corrs;
    if (cfg.association.use_two_stage)
    {
      t.cluster = cluster_matches(first, qfeats, mfeats, s, s, img.width(), img.height(), cfg.association);
      if (!t.cluster)
      {
        out.trace.push_back(std::move(t));
        continue;
      }
      const auto lifted_first = lift_2d3d(first, qfeats, mfeats, img, db, cfg.association.lift_radius, Stage::First, to_query);
      const StageMatches second = second_stage_match(view.warped, img.intensity, t.cluster->query_box,
                                                     t.cluster->map_box, cfg.association, *local);
      const MatchSet second_ok = drop_border_matches(second.matches, second.query, view);
      t.second_matches = second_ok.size();
      stats.matches += second_ok.size();
      const auto lifted_second =
          lift_2d3d(second_ok, second.query, second.map, img, db, cfg.association.lift_radius, Stage::Second, to_query);
      corrs = concat_stages(lifted_first, lifted_second);
    }
    else
    {
      corrs = lift_2d3d(first, qfeats, mfeats, img, db, cfg.association.lift_radius, Stage::First, to_query);
    }
    t.accepted = true;
    ++stats.candidates_accepted;
    t.lifted = corrs.size();
    pool.insert(pool.end(), corrs.begin(), corrs.end());
    out.trace.push_back(std::move(t));
  }
  stats.lifted = pool.size();
  out.correspondences = cfg.association.use_covis_filter ? covisibility_filter(pool, cfg.association.min_covis) : pool;
  stats.filtered = out.correspondences.size();

  const StageStats keep = stats;
  if (stats.candidates_accepted == 0)
  {
    out.result = RelocalizationResult{};
    out.result.reason = "insufficient matches";
  }
  else
  {
    out.result = pnp_ransac(out.correspondences, k, cfg.ransac);
  }
  out.result.stats = keep;
  return out;
}

/// Relocalizes a batch; outcome i belongs to query i regardless of scheduling.
inline std::vector<QueryOutcome> relocalize_all(const Database& db, const std::vector<GrayImage>& queries,
                                                const CameraIntrinsics& k, const PipelineConfig& cfg)
{
  std::vector<QueryOutcome> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { out[i] = relocalize_query(db, queries[i], k, cfg); });
  return out;
}

} // namespace reloc
