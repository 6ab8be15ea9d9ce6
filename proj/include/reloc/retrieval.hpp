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

#include <algorithm>
#include <map>
#include <vector>

namespace reloc
{

struct Candidate
{
  std::int64_t image_id = 0;
  int best_patch = 0;
  double score = 0.0;
  int cluster_label = kNoise;
  bool operator==(const Candidate&) const = default;
};

struct RetrievalConfig
{
  int k = 50;
  int k_prime = 10;
  double dbscan_eps = 2.5; ///< m, between projecting-pose translations
  int dbscan_min_pts = 2;
  bool use_covis_cluster = true;

  void validate() const
  {
    if (k < 1 || k_prime < 1 || k_prime > k)
      throw Error("retrieval: require k >= k_prime >= 1");
    if (!(dbscan_eps > 0.0) || dbscan_min_pts < 1)
      throw Error("retrieval: invalid DBSCAN parameters");
  }
};

/// Scores each map image by its best-matching cube patch and keeps the top k.
/// Ties go to the lower image id.
inline std::vector<Candidate> retrieve_topk(const GlobalDescriptor& query, const Database& db, int k)
{
  if (k < 1)
    throw Error("retrieve_topk: k must be >= 1");
  std::vector<Candidate> all;
  all.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i)
  {
    Candidate c;
    c.image_id = db.images[i].image_id;
    c.score = -2.0;
    for (int p = 0; p < 4; ++p)
    {
      const double s = similarity(query, db.patch_descriptor(i, p));
      if (s > c.score)
      {
        c.score = s;
        c.best_patch = p;
      }
    }
    all.push_back(c);
  }
  std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.image_id < b.image_id);
  });
  if (static_cast<int>(all.size()) > k)
    all.resize(static_cast<std::size_t>(k));
  return all;
}

inline const MapImage& image_by_id(const Database& db, std::int64_t id)
{
  if (id >= 0 && id < static_cast<std::int64_t>(db.size()) && db.images[id].image_id == id)
    return db.images[static_cast<std::size_t>(id)];
  for (const auto& img : db.images)
    if (img.image_id == id)
      return img;
  throw Error("database: unknown image id " + std::to_string(id));
}

/// Copies of the candidates labeled by DBSCAN over their projecting-pose translations.
inline std::vector<Candidate> label_candidates(const std::vector<Candidate>& cands, const Database& db,
                                               const RetrievalConfig& cfg)
{
  std::vector<Vec3> positions;
  positions.reserve(cands.size());
  for (const auto& c : cands)
    positions.push_back(image_by_id(db, c.image_id).pose.translation);
  const auto labels = dbscan<3>(positions, cfg.dbscan_eps, cfg.dbscan_min_pts);
  std::vector<Candidate> out = cands;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].cluster_label = labels[i];
  return out;
}

/// Clusters candidates by the translation of their projecting poses and keeps up
/// to k_prime members of the winning cluster. Clusters rank by size, then by their
/// best score; members rank by score. If every candidate is noise the plain top
/// k_prime are returned.
inline std::vector<Candidate> covisibility_cluster(const std::vector<Candidate>& cands, const Database& db,
                                                   const RetrievalConfig& cfg)
{
  std::vector<Candidate> out;
  if (cands.empty())
    return out;
  const auto labeled = label_candidates(cands, db, cfg);

  struct ClusterStats
  {
    int size = 0;
    double best = -2.0;
  };
  std::map<int, ClusterStats> stats;
  for (const auto& c : labeled)
    if (c.cluster_label != kNoise)
    {
      auto& s = stats[c.cluster_label];
      ++s.size;
      s.best = std::max(s.best, c.score);
    }

  if (stats.empty())
  {
    out.assign(labeled.begin(), labeled.begin() + std::min<std::ptrdiff_t>(cfg.k_prime, labeled.size()));
    return out;
  }

  int winner = stats.begin()->first;
  for (const auto& [label, s] : stats)
  {
    const auto& w = stats.at(winner);
    if (s.size > w.size || (s.size == w.size && s.best > w.best))
      winner = label;
  }
  for (const auto& c : labeled)
    if (c.cluster_label == winner)
      out.push_back(c);
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > cfg.k_prime)
    out.resize(static_cast<std::size_t>(cfg.k_prime));
  return out;
}

} // namespace reloc
