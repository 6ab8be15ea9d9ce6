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

#include "reloc/clahe.hpp"
#include "reloc/common.hpp"
#include "reloc/features.hpp"
#include "reloc/io.hpp"
#include "reloc/kv.hpp"
#include "reloc/projection.hpp"

#include <array>
#include <concepts>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace reloc
{

/// Settings that fix how map images and their features are produced. Stored in
/// the database manifest so queries are processed the same way.
struct MapBuildConfig
{
  ProjectionConfig projection;
  bool equalize = true;     ///< global 3D equalization + CLAHE; false = min-max scaling, no CLAHE
  double clahe_clip = 2.0;
  int clahe_tiles = 8;
  double interval_m = 1.0;
  double max_dist_m = 50.0;
  std::string global_extractor = "hog-gist";
  std::string local_extractor = "harris-patch";
  int max_kp = 1024;
  double patch_band = 0.5;  ///< central fraction of face rows used for patch descriptors

  void validate() const
  {
    projection.validate();
    if (!(clahe_clip >= 1.0) || clahe_tiles < 1)
      throw Error("config: invalid CLAHE settings");
    if (!(interval_m > 0.0) || !(max_dist_m > 0.0))
      throw Error("config: map interval and max distance must be positive");
    if (max_kp <= 0)
      throw Error("config: max_kp must be positive");
    if (!(patch_band > 0.0 && patch_band <= 1.0))
      throw Error("config: patch_band must be in (0, 1]");
    make_global_extractor(global_extractor);
    make_local_extractor(local_extractor);
  }
  bool operator==(const MapBuildConfig&) const = default;
};

/// Visits every field with its dotted configuration key.
template <typename Cfg, typename Visitor>
  requires std::same_as<std::remove_const_t<Cfg>, MapBuildConfig>
void visit_fields(Cfg& c, Visitor&& v)
{
  v("projection.face_size", c.projection.face_size);
  v("projection.splat_gain", c.projection.splat_gain);
  v("projection.splat_max", c.projection.splat_max);
  v("projection.z_near", c.projection.z_near);
  v("ablation.use_hec", c.projection.use_hec);
  v("ablation.use_equalization", c.equalize);
  v("equalization.clahe_clip", c.clahe_clip);
  v("equalization.clahe_tiles", c.clahe_tiles);
  v("map.interval_m", c.interval_m);
  v("map.max_dist_m", c.max_dist_m);
  v("features.global", c.global_extractor);
  v("features.local", c.local_extractor);
  v("features.max_kp_first", c.max_kp);
  v("features.patch_band", c.patch_band);
}

/// Row range [first, last) of the central band of a face.
inline std::pair<int, int> patch_band_rows(int face_size, double band)
{
  const int half = std::max(1, static_cast<int>(std::lround(band * face_size * 0.5)));
  const int mid = face_size / 2;
  return {std::max(0, mid - half), std::min(face_size, mid + half)};
}

inline PixelRect cube_patch_rect(int face, int face_size, double band)
{
  const auto [r0, r1] = patch_band_rows(face_size, band);
  return {face * face_size, r0, (face + 1) * face_size, r1};
}

/// Contrast normalization applied to both map panoramas and queries.
inline GrayImage normalize_contrast(const GrayImage& img, const MapBuildConfig& cfg)
{
  return cfg.equalize ? clahe(img, cfg.clahe_clip, cfg.clahe_tiles) : img;
}

//-----------------------------------------------------------------------------

struct Database
{
  PointCloud cloud;                          ///< with intensity_eq set
  std::vector<MapImage> images;
  std::vector<GlobalDescriptor> global_feats; ///< 4 per image, index 4 * image + patch
  std::vector<LocalFeatureSet> local_feats;   ///< one per image, on the full panorama
  std::map<std::int64_t, std::int64_t> covis; ///< point id -> number of images containing it
  MapBuildConfig config;

  std::size_t size() const { return images.size(); }
  const GlobalDescriptor& patch_descriptor(std::size_t image, int patch) const { return global_feats[4 * image + patch]; }
  std::int64_t covis_of(std::int64_t id) const
  {
    const auto it = covis.find(id);
    return it == covis.end() ? 0 : it->second;
  }
  const MapPoint& point(std::int64_t id) const
  {
    if (id < 0 || id >= static_cast<std::int64_t>(cloud.size()) || cloud.points[id].id != id)
      throw Error("database: unknown point id " + std::to_string(id));
    return cloud.points[static_cast<std::size_t>(id)];
  }
  bool operator==(const Database&) const = default;
};

/// Counts, per point id, the images whose id buffer contains it (once per image).
inline std::map<std::int64_t, std::int64_t> count_covisibility(const std::vector<MapImage>& images)
{
  std::map<std::int64_t, std::int64_t> covis;
  for (const auto& img : images)
  {
    std::vector<std::int64_t> ids;
    ids.reserve(img.point_id.size());
    for (const auto id : img.point_id)
      if (id != kNoPoint)
        ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (const auto id : ids)
      ++covis[id];
  }
  return covis;
}

struct MapImageFeatures
{
  std::array<GlobalDescriptor, 4> patches;
  LocalFeatureSet local;
};

/// Contrast-normalizes a rendered panorama in place and extracts its features.
inline MapImageFeatures describe_map_image(MapImage& img, const MapBuildConfig& cfg)
{
  img.intensity = normalize_contrast(img.intensity, cfg);
  const auto global = make_global_extractor(cfg.global_extractor);
  const auto local = make_local_extractor(cfg.local_extractor);
  MapImageFeatures f;
  for (int p = 0; p < 4; ++p)
    f.patches[p] = global->extract(crop(img.intensity, cube_patch_rect(p, cfg.projection.face_size, cfg.patch_band)));
  f.local = local->extract(img.intensity, cfg.max_kp);
  return f;
}

/// Offline stage: intensity normalization, trajectory sampling, per-pose crop and
/// render, contrast normalization, feature extraction, covisibility counting.
inline Database build_database(const PointCloud& cloud, const Trajectory& traj, const MapBuildConfig& cfg)
{
  cfg.validate();
  if (cloud.empty())
    throw Error("build_database: empty point cloud");
  if (traj.empty())
    throw Error("build_database: empty trajectory");
  Database db;
  db.config = cfg;
  db.cloud = cfg.equalize ? equalize_map_intensity(cloud) : linear_map_intensity(cloud);
  const auto poses = sample_trajectory(traj, cfg.interval_m);
  if (poses.empty())
    throw Error("build_database: trajectory too short");

  const std::size_t n = poses.size();
  db.images.resize(n);
  db.global_feats.resize(4 * n);
  db.local_feats.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto local = crop_local_map(db.cloud, poses[i], cfg.max_dist_m);
    db.images[i] = render_panorama(local, poses[i], cfg.projection, static_cast<std::int64_t>(i));
    auto f = describe_map_image(db.images[i], cfg);
    for (int p = 0; p < 4; ++p)
      db.global_feats[4 * i + p] = std::move(f.patches[p]);
    db.local_feats[i] = std::move(f.local);
  });
  db.covis = count_covisibility(db.images);
  return db;
}

//-----------------------------------------------------------------------------
// Persistence

inline constexpr int kDatabaseVersion = 1;

namespace detail
{
template <typename T>
void put(std::ostream& out, const T& v)
{
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what)
{
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw Error("truncated " + what);
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& p)
{
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw Error("cannot write " + p.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw Error("missing buffer file: " + p.string());
  return in;
}
} // namespace detail

/// Directory layout: manifest.txt, cloud.ply, img_{id}.{pgm,depth,pid}, global.bin,
/// local.bin, covis.bin.
inline void save_database(const Database& db, const std::filesystem::path& dir)
{
  using namespace detail;
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt");
    if (!m)
      throw Error("cannot write manifest in " + dir.string());
    m << "version " << kDatabaseVersion << "\n";
    visit_fields(db.config, [&](const char* key, const auto& value) { m << "config " << key << " " << kv::format(value) << "\n"; });
    m << std::setprecision(17);
    for (const auto& img : db.images)
    {
      m << "image " << img.image_id;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          m << ' ' << img.pose.rotation(r, c);
      for (int r = 0; r < 3; ++r)
        m << ' ' << img.pose.translation(r);
      m << "\n";
    }
  }
  save_point_cloud(db.cloud, dir / "cloud.ply");
  for (const auto& img : db.images)
    save_map_image(img, dir);
  {
    auto out = open_out(dir / "global.bin");
    const std::uint64_t dims = db.global_feats.empty() ? 0 : db.global_feats.front().values.size();
    put<std::uint64_t>(out, db.global_feats.size());
    put<std::uint64_t>(out, dims);
    for (const auto& g : db.global_feats)
    {
      if (g.values.size() != dims)
        throw Error("save_database: inconsistent global descriptor length");
      out.write(reinterpret_cast<const char*>(g.values.data()), static_cast<std::streamsize>(dims * sizeof(float)));
    }
  }
  {
    auto out = open_out(dir / "local.bin");
    put<std::uint64_t>(out, db.local_feats.size());
    for (const auto& f : db.local_feats)
    {
      put<std::uint64_t>(out, f.keypoints.size());
      put<std::uint64_t>(out, static_cast<std::uint64_t>(f.descriptors.cols()));
      for (const auto& k : f.keypoints)
      {
        put(out, k.x);
        put(out, k.y);
        put(out, k.score);
      }
      out.write(reinterpret_cast<const char*>(f.descriptors.data()),
                static_cast<std::streamsize>(f.descriptors.size() * sizeof(float)));
    }
  }
  {
    auto out = open_out(dir / "covis.bin");
    put<std::uint64_t>(out, db.covis.size());
    for (const auto& [id, count] : db.covis)
    {
      put(out, id);
      put(out, count);
    }
  }
}

inline Database load_database(const std::filesystem::path& dir)
{
  using namespace detail;
  const auto manifest = dir / "manifest.txt";
  std::ifstream m(manifest);
  if (!m)
    throw Error("missing manifest: " + manifest.string());
  Database db;
  std::vector<std::pair<std::int64_t, Pose>> poses;
  std::map<std::string, std::string> cfg_values;
  std::string line;
  bool have_version = false;
  while (std::getline(m, line))
  {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag.empty())
      continue;
    if (tag == "version")
    {
      int v = -1;
      ls >> v;
      if (v != kDatabaseVersion)
        throw Error("database version mismatch: expected " + std::to_string(kDatabaseVersion) + ", found " +
                    std::to_string(v));
      have_version = true;
    }
    else if (tag == "config")
    {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      cfg_values[key] = value;
    }
    else if (tag == "image")
    {
      std::int64_t id;
      Pose pose;
      ls >> id;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          ls >> pose.rotation(r, c);
      for (int r = 0; r < 3; ++r)
        ls >> pose.translation(r);
      if (!ls)
        throw Error("malformed manifest image line: " + line);
      poses.emplace_back(id, pose);
    }
    else
    {
      throw Error("unknown manifest entry: " + tag);
    }
  }
  if (!have_version)
    throw Error("manifest lacks a version line");
  visit_fields(db.config, [&](const char* key, auto& value) {
    const auto it = cfg_values.find(key);
    if (it == cfg_values.end())
      throw Error(std::string("manifest lacks config key ") + key);
    kv::parse(key, it->second, value);
  });

  db.cloud = load_point_cloud(dir / "cloud.ply");
  for (const auto& [id, pose] : poses)
    db.images.push_back(load_map_image(dir, id, pose));
  {
    auto in = open_in(dir / "global.bin");
    const auto count = get<std::uint64_t>(in, "global.bin");
    const auto dims = get<std::uint64_t>(in, "global.bin");
    if (count != 4 * db.images.size())
      throw Error("global.bin holds " + std::to_string(count) + " descriptors, expected " +
                  std::to_string(4 * db.images.size()));
    db.global_feats.resize(count);
    for (auto& g : db.global_feats)
    {
      g.values.resize(dims);
      in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(dims * sizeof(float)));
      if (!in)
        throw Error("truncated global.bin");
    }
  }
  {
    auto in = open_in(dir / "local.bin");
    const auto count = get<std::uint64_t>(in, "local.bin");
    if (count != db.images.size())
      throw Error("local.bin image count mismatch");
    db.local_feats.resize(count);
    for (auto& f : db.local_feats)
    {
      const auto n = get<std::uint64_t>(in, "local.bin");
      const auto dims = get<std::uint64_t>(in, "local.bin");
      f.keypoints.resize(n);
      for (auto& k : f.keypoints)
      {
        k.x = get<float>(in, "local.bin");
        k.y = get<float>(in, "local.bin");
        k.score = get<float>(in, "local.bin");
      }
      f.descriptors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
      in.read(reinterpret_cast<char*>(f.descriptors.data()),
              static_cast<std::streamsize>(f.descriptors.size() * sizeof(float)));
      if (!in)
        throw Error("truncated local.bin");
    }
  }
  {
    auto in = open_in(dir / "covis.bin");
    const auto count = get<std::uint64_t>(in, "covis.bin");
    for (std::uint64_t i = 0; i < count; ++i)
    {
      const auto id = get<std::int64_t>(in, "covis.bin");
      db.covis[id] = get<std::int64_t>(in, "covis.bin");
    }
  }
  return db;
}

} // namespace reloc
